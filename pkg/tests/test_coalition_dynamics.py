"""Decision-rule truth table, rate-window bookkeeping, and CoV statistic."""

import pytest

from swarmcoal.coalition_dynamics import (
    Action,
    CoalitionPolicy,
    RateWindow,
    coefficient_of_variation,
    decide,
)


def oracle(is_member, own, own_co, best, in_best, beta):
    """Independent re-statement of the membership rule."""
    perceive = lambda r: (1.0 - beta) * r
    if not is_member:
        if best is not None and own < perceive(best):
            return Action.JOIN_MAX
        return Action.STAY
    if own >= own_co:  # own coalition is judged undiscounted, from inside
        return Action.STAY
    if not in_best and best is not None and own < perceive(best):
        return Action.JOIN_MAX
    if in_best:
        return Action.LEAVE
    return Action.STAY


def test_decision_truth_table_exhaustive():
    rates = [0.0, 0.3, 0.5, 0.8, 1.0, 1.6]
    for beta in (0.0, 0.1, 0.5, 0.9, 1.0):
        policy = CoalitionPolicy(discount=beta)
        # non-members: no own coalition rate
        for own in rates:
            for best in rates + [None]:
                assert decide(False, own, None, best, False, policy) \
                    == oracle(False, own, None, best, False, beta)
        # members: all orderings of own/coalition/best rates
        for own in rates:
            for own_co in rates:
                for best in rates:
                    for in_best in (False, True):
                        assert decide(True, own, own_co, best, in_best,
                                      policy) \
                            == oracle(True, own, own_co, best, in_best, beta)


def test_full_discount_annihilates_attraction():
    policy = CoalitionPolicy(discount=1.0)
    # non-members never join: every perceived rate is zero
    assert decide(False, 0.0, None, 10.0, False, policy) is Action.STAY
    # members keeping up with their own (undiscounted) average stay
    assert decide(True, 5.0, 5.0, 9.0, False, policy) is Action.STAY
    # a lagging member in the best coalition still leaves
    assert decide(True, 4.9, 5.0, 5.0, True, policy) is Action.LEAVE


def test_member_keeping_up_stays():
    policy = CoalitionPolicy(discount=0.5)
    assert decide(True, 1.0, 1.0, 2.0, False, policy) is Action.STAY


def test_lagging_member_switches_or_leaves():
    policy = CoalitionPolicy(discount=0.5)
    # lagging, not in the best coalition, best looks better -> switch
    assert decide(True, 0.4, 1.0, 2.0, False, policy) is Action.JOIN_MAX
    # lagging and already in the best -> leave entirely
    assert decide(True, 0.4, 1.0, 1.0, True, policy) is Action.LEAVE
    # lagging, not in best, but best not attractive either -> stay put
    assert decide(True, 0.4, 1.0, 0.7, False, policy) is Action.STAY


def test_policy_validation():
    CoalitionPolicy(discount=0.0)
    CoalitionPolicy(discount=1.0)
    for kwargs in ({"discount": -0.1}, {"discount": 1.1},
                   {"decision_stride": 0}, {"join_prob": 1.5},
                   {"decision_delay": -1}):
        with pytest.raises(ValueError):
            CoalitionPolicy(**kwargs)


# --------------------------------------------------------------- rate window

def test_rate_window_basic_average():
    w = RateWindow(window=10.0)
    w.credit(1.0, 2.0)
    w.credit(5.0, 3.0)
    assert w.rate(10.0) == pytest.approx(0.5)


def test_rate_window_expires_old_credit():
    w = RateWindow(window=10.0)
    w.credit(1.0, 4.0)
    w.credit(12.0, 1.0)
    # at t=15 only the credit at t=12 is inside (5, 15]
    assert w.rate(15.0) == pytest.approx(0.1)


def test_rate_window_young_peer_uses_elapsed_horizon():
    w = RateWindow(window=100.0)
    w.credit(3.0, 2.0)
    # peer arrived at t=2: horizon is 8 s, not 100 s
    assert w.rate(10.0, since=2.0) == pytest.approx(0.25)
    assert w.rate(2.0, since=2.0) == 0.0


def test_rate_window_validation():
    with pytest.raises(ValueError):
        RateWindow(window=0.0)


# ---------------------------------------------------------------------- CoV

def test_coefficient_of_variation():
    assert coefficient_of_variation([]) == 0.0
    assert coefficient_of_variation([5, 5, 5]) == 0.0
    # population std of [2, 4] is 1, mean 3
    assert coefficient_of_variation([2, 4]) == pytest.approx(1 / 3)
