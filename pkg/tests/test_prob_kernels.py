"""Oracle and invariant tests for the combinatorial probability kernels."""

import math
import random
from itertools import combinations

import pytest
from hypothesis import given, settings, strategies as st

from swarmcoal.errors import DegeneratePopulationError
from swarmcoal.prob_kernels import (
    ModelParams,
    QueueProfile,
    _surplus_exactly,
    log_binom,
    out_connection_active_prob,
    per_connection_upload_rate,
    prob_connection_active,
    prob_interested,
    prob_interested_at_slot,
    prob_interested_first_slot,
    prob_unchoked,
    slots_per_interval,
)


# ------------------------------------------------------------------ oracles

def surplus_oracle(i, j, B):
    """Exact distribution of |J \\ I| by enumerating all subset pairs."""
    pieces = range(B)
    dist = {}
    total = 0
    for I in combinations(pieces, i):
        si = set(I)
        for J in combinations(pieces, j):
            s = len(set(J) - si)
            dist[s] = dist.get(s, 0) + 1
            total += 1
    return {s: c / total for s, c in dist.items()}


@pytest.mark.parametrize("B", [4, 6])
def test_surplus_matches_enumeration(B):
    for i in range(B + 1):
        for j in range(B + 1):
            oracle = surplus_oracle(i, j, B)
            for s in range(B + 1):
                assert _surplus_exactly(i, j, B, s) == pytest.approx(
                    oracle.get(s, 0.0), abs=1e-12)


@pytest.mark.parametrize("B", [4, 6, 8])
def test_first_slot_interest_matches_enumeration(B):
    for i in range(B + 1):
        for j in range(B + 1):
            oracle = 1.0 - surplus_oracle(i, j, B).get(0, 0.0)
            assert prob_interested_first_slot(i, j, B) == pytest.approx(
                oracle, abs=1e-12)


def test_surplus_distribution_normalizes():
    for B, i, j in [(8, 3, 5), (10, 7, 2), (12, 6, 6)]:
        total = sum(_surplus_exactly(i, j, B, s) for s in range(B + 1))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_log_binom_matches_comb():
    for n in range(12):
        for k in range(n + 1):
            assert math.exp(log_binom(n, k)) == pytest.approx(
                math.comb(n, k), rel=1e-12)
    assert log_binom(3, 5) == -math.inf
    assert log_binom(-1, 0) == -math.inf


# --------------------------------------------------------------- invariants

@given(st.integers(2, 20), st.data())
@settings(max_examples=200, deadline=None)
def test_interest_probabilities_are_probabilities(B, data):
    i = data.draw(st.integers(0, B))
    j = data.draw(st.integers(0, B))
    p1 = prob_interested_first_slot(i, j, B)
    assert 0.0 <= p1 <= 1.0
    if i < j:  # the uploader must hold something new
        assert p1 == 1.0
    phi = data.draw(st.integers(1, 6))
    p = prob_interested(i, j, B, phi)
    assert 0.0 <= p <= p1 + 1e-12


@given(st.integers(2, 16), st.data())
@settings(max_examples=150, deadline=None)
def test_slot_conditioned_interest_is_nonincreasing(B, data):
    i = data.draw(st.integers(0, B))
    j = data.draw(st.integers(0, B))
    prev = 1.0
    for slot in range(1, min(j + 2, 8)):
        p = prob_interested_at_slot(i, j, B, slot)
        assert 0.0 <= p <= prev + 1e-12
        prev = p
    if j >= 0:
        assert prob_interested_at_slot(i, j, B, j + 1) == 0.0


def test_unconditional_interest_is_slot_mean():
    B, i, j, phi = 10, 6, 5, 4
    mean = sum(prob_interested_at_slot(i, j, B, s)
               for s in range(1, phi + 1)) / phi
    assert prob_interested(i, j, B, phi) == pytest.approx(mean, abs=1e-12)


# ----------------------------------------------------------------- rates

def test_per_connection_rate_limits():
    u = 2.0
    # one slot: the connection gets everything when live
    assert per_connection_upload_rate(u, 1, 0.25) == pytest.approx(u * 0.25)
    # all slots always live: capacity splits k ways
    assert per_connection_upload_rate(u, 5, 1.0) == pytest.approx(u / 5)
    assert per_connection_upload_rate(u, 5, 0.0) == 0.0


def test_per_connection_rate_matches_monte_carlo():
    u, k, eta = 1.0, 4, 0.6
    rng = random.Random(7)
    n = 200_000
    samples = []
    for _ in range(n):
        w = sum(rng.random() < eta for _ in range(k))
        samples.append(u / w if w else 0.0)
    mean = sum(samples) / n
    var = sum((x - mean) ** 2 for x in samples) / (n - 1)
    sigma = math.sqrt(var / n)
    assert abs(per_connection_upload_rate(u, k, eta) - mean) < 3 * sigma


def test_prob_unchoked_basics():
    assert prob_unchoked(2.0, 1) == pytest.approx(0.5)
    assert prob_unchoked(1.0, 3) == pytest.approx(1.0)
    # k independent draws over n targets: 1 - (1 - 1/n)^k
    assert prob_unchoked(10.0, 4) == pytest.approx(1 - 0.9**4)
    with pytest.raises(DegeneratePopulationError):
        prob_unchoked(0.5, 1)


def test_connection_active_factorizes():
    B, i, j, phi, pop, k = 12, 5, 7, 3, 30.0, 4
    assert prob_connection_active(i, j, B, phi, pop, k) == pytest.approx(
        prob_unchoked(pop, k) * prob_interested(i, j, B, phi))


# -------------------------------------------------------------- aggregates

def test_out_connection_active_prob_weighted_mean():
    B, phi = 8, 2
    profile = QueueProfile(n_bar=[3.0, 1.0, 0.0, 2.0] + [0.0] * 4)
    j = 4
    expected = (3 * prob_interested(0, j, B, phi)
                + 1 * prob_interested(1, j, B, phi)
                + 2 * prob_interested(3, j, B, phi)) / 6.0
    assert out_connection_active_prob(profile, j, B, phi) == pytest.approx(
        expected, abs=1e-12)
    with pytest.raises(DegeneratePopulationError):
        out_connection_active_prob(QueueProfile(n_bar=[0.0] * B), j, B, phi)


def test_slots_per_interval():
    assert slots_per_interval(10.0, 0.5, 0.0) == 5
    assert slots_per_interval(10.0, 0.5, 1.0) == 1     # effective interval 1 s
    assert slots_per_interval(10.0, 0.05, 0.0) == 1    # floor of one slot
    assert slots_per_interval(10.0, 0.0, 0.0) == 1
    with pytest.raises(ValueError):
        slots_per_interval(0.0, 0.5, 0.0)


# ----------------------------------------------------------------- params

def test_model_params_validation():
    good = dict(arrival_rate=0.5, upload_capacity=0.5, num_pieces=10,
                rechoke_interval=10.0, unchoke_slots=4)
    ModelParams(**good)
    for key, bad in [("arrival_rate", 0.0), ("upload_capacity", -1.0),
                     ("num_pieces", 0), ("rechoke_interval", 0.0),
                     ("unchoke_slots", 0)]:
        with pytest.raises(ValueError):
            ModelParams(**{**good, key: bad})
