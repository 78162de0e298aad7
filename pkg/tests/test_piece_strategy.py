"""Piece-selection strategies: worked example, exhaustive oracle equivalence,
Monte-Carlo check of the interest probability, and availability metrics."""

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from swarmcoal.piece_strategy import (
    PieceMatrix,
    availability_loss,
    availability_upper_bound,
    iter_bits,
    pick_rarest,
    rarest_set_mask,
    select_peer_balance,
    select_rarest_first,
)
from swarmcoal.prob_kernels import prob_interested_first_slot


# --------------------------------------------------------- worked example

WORKED_EXAMPLE = PieceMatrix(v=[
    # peers:  1  2  3  4  5  6
    [1, 0, 0, 0, 0, 1],   # piece 1
    [0, 1, 1, 1, 0, 0],   # piece 2
    [0, 0, 1, 0, 0, 1],   # piece 3
    [0, 1, 0, 1, 1, 0],   # piece 4
    [0, 1, 0, 1, 1, 0],   # piece 5
])


def test_worked_example_picks_piece_three():
    # peer 5 (index 4) unchoked by peer 6 (index 5): pieces 1 and 3 tie as
    # rarest; piece 3 is the one missed by the poorest peer (peer 1, 1 piece)
    assert select_peer_balance(4, 5, WORKED_EXAMPLE) == 2


def test_worked_example_poorest_counts():
    counts = WORKED_EXAMPLE.per_peer_counts()
    assert counts == [1, 3, 2, 3, 2, 2]
    assert WORKED_EXAMPLE.replication() == [2, 3, 2, 3, 3]


# ------------------------------------------------------- exhaustive oracle

def peer_balance_oracle(downloader, uploader, matrix):
    """Brute-force double minimization, written independently of the
    bitmask implementation."""
    B, P = matrix.num_pieces, matrix.num_peers
    has = lambda b, p: bool(matrix.v[b][p])
    eligible = [b for b in range(B)
                if has(b, uploader) and not has(b, downloader)]
    if not eligible:
        return None
    repl = matrix.replication()
    rarest_count = min(repl[b] for b in eligible)
    rarest = [b for b in eligible if repl[b] == rarest_count]
    if len(rarest) == 1:
        return rarest[0]
    counts = matrix.per_peer_counts()
    best = None
    for b in sorted(rarest):
        missing = [counts[p] for p in range(P) if not has(b, p)]
        key = (min(missing) if missing else math.inf, b)
        if best is None or key < best[0]:
            best = (key, b)
    return best[1]


@given(st.integers(1, 8), st.integers(2, 6), st.data())
@settings(max_examples=400, deadline=None)
def test_peer_balance_matches_oracle(B, P, data):
    v = [[data.draw(st.integers(0, 1)) for _ in range(P)] for _ in range(B)]
    matrix = PieceMatrix(v=v)
    downloader = data.draw(st.integers(0, P - 1))
    uploader = data.draw(st.integers(0, P - 1).filter(lambda u: u != downloader))
    assert select_peer_balance(downloader, uploader, matrix) \
        == peer_balance_oracle(downloader, uploader, matrix)


def test_peer_balance_matches_oracle_dense_sweep():
    rng = random.Random(12345)
    for _ in range(600):
        B = rng.randint(1, 8)
        P = rng.randint(2, 6)
        density = rng.random()
        matrix = PieceMatrix(v=[[1 if rng.random() < density else 0
                                 for _ in range(P)] for _ in range(B)])
        d = rng.randrange(P)
        u = (d + 1 + rng.randrange(P - 1)) % P
        assert select_peer_balance(d, u, matrix) \
            == peer_balance_oracle(d, u, matrix)


# ------------------------------------------- Monte Carlo interest probability

def test_interest_probability_matches_monte_carlo():
    rng = random.Random(99)
    n = 1_000_000
    cases = [(8, 5, 3), (8, 4, 4), (6, 2, 5)]
    for B, i, j in cases:
        pieces = list(range(B))
        hits = 0
        for _ in range(n // len(cases)):
            I = set(rng.sample(pieces, i))
            J = set(rng.sample(pieces, j))
            hits += bool(J - I)
        m = n // len(cases)
        p_hat = hits / m
        p = prob_interested_first_slot(i, j, B)
        sigma = math.sqrt(max(p * (1 - p), 1e-12) / m)
        assert abs(p_hat - p) < 3 * sigma


# -------------------------------------------------------------- primitives

def test_pick_rarest_and_rarest_set():
    counts = [5, 1, 3, 1, 9]
    eligible = 0b11111
    assert rarest_set_mask(eligible, counts) == 0b01010
    rng = random.Random(0)
    for _ in range(20):
        assert pick_rarest(eligible, counts, rng) in (1, 3)
    # unique minimum needs no rng
    assert pick_rarest(0b10101, counts, rng) == 2 if counts[2] < min(
        counts[0], counts[4]) else pick_rarest(0b10101, counts, rng) in (0, 2, 4)


def test_iter_bits():
    assert list(iter_bits(0b101001)) == [0, 3, 5]
    assert list(iter_bits(0)) == []


def test_select_rarest_first_prefers_partials():
    matrix = PieceMatrix(v=[[0, 1], [0, 1], [0, 1]])
    rng = random.Random(1)
    # piece 2 is partially downloaded: it wins over untouched rarer pieces
    assert select_rarest_first(0, 1, matrix, scope_peers=[0, 1], rng=rng,
                               partial_mask=0b100) == 2
    # not interested when the uploader has nothing new
    empty = PieceMatrix(v=[[1, 1]])
    assert select_rarest_first(0, 1, empty, scope_peers=[0, 1], rng=rng) is None


def test_select_peer_balance_respects_in_flight():
    matrix = PieceMatrix(v=[[0, 1], [0, 1]])
    assert select_peer_balance(0, 1, matrix, in_flight=0b01) == 1
    assert select_peer_balance(0, 1, matrix, in_flight=0b11) is None


# ------------------------------------------------------ availability metrics

def test_availability_upper_bound():
    assert availability_upper_bound(1.0, 10, 0.0) == 0
    assert availability_upper_bound(1.0, 10, 3.999999999) == 4  # fp slack
    assert availability_upper_bound(1.0, 10, 50.0) == 10
    with pytest.raises(ValueError):
        availability_upper_bound(1.0, 10, -1.0)


def test_availability_loss_hand_trace():
    # u_s=1, B=10, t*=10; two samples: t=2 (bound 2, have 1) and t=4
    # (bound 4, have 4)
    samples = [(2.0, 1), (4.0, 4)]
    loss, avg = availability_loss(samples, 1.0, 10, 10.0)
    assert loss == [(2.0, 0.5), (4.0, 0.0)]
    # trapezoid: 0.5 on [0,2], falling to 0 on [2,4], flat 0 to 10
    assert avg == pytest.approx((0.5 * 2 + 0.25 * 2) / 10.0)


def test_availability_loss_rejects_impossible_counts():
    with pytest.raises(ValueError):
        availability_loss([(2.0, 5)], 1.0, 10, 10.0)


def test_availability_loss_zero_when_bound_met():
    samples = [(t, min(t, 10)) for t in range(1, 11)]
    loss, avg = availability_loss(samples, 1.0, 10, 10.0)
    assert avg == 0.0
    assert all(l == 0.0 for _, l in loss)
