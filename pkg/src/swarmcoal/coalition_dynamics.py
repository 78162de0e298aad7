"""Join/leave decision rule for dynamic coalition membership.

Peers periodically compare their own recent download rate against the
(perception-discounted) average rates of the coalitions in the swarm and
decide whether to join, stay, switch, or leave. The rule itself is a pure
function; the simulator supplies the measured rates and applies the action.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Action(Enum):
    STAY = "stay"
    JOIN_MAX = "join_max"
    LEAVE = "leave"


@dataclass(frozen=True)
class CoalitionPolicy:
    """Knobs of the membership dynamics.

    discount: fraction by which a peer undervalues a coalition's advertised
        average rate when judging it from outside (perceived = (1-discount)*raw).
    decision_stride: decisions happen every decision_stride re-choke intervals.
    join_prob: probability a freshly arrived peer starts inside a coalition.
    decision_delay: re-choke intervals a peer waits after arrival before its
        first decision (it needs a rate history first).
    """

    discount: float = 0.5
    decision_stride: int = 10
    join_prob: float = 0.1
    decision_delay: int = 3

    def __post_init__(self):
        if not 0 <= self.discount <= 1:
            raise ValueError("discount must be in [0, 1]")
        if self.decision_stride < 1:
            raise ValueError("decision_stride must be >= 1")
        if not 0 <= self.join_prob <= 1:
            raise ValueError("join_prob must be in [0, 1]")
        if self.decision_delay < 0:
            raise ValueError("decision_delay must be >= 0")


@dataclass
class RateWindow:
    """Sliding-window download credit: (time, amount) pairs, pruned lazily."""

    window: float
    events: list = None

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window must be > 0")
        if self.events is None:
            self.events = []

    def credit(self, t: float, amount: float) -> None:
        self.events.append((t, amount))

    def rate(self, now: float, since: float | None = None) -> float:
        """Average rate over the window ending at `now`. For peers younger
        than the window, `since` (arrival time) shortens the horizon."""
        start = now - self.window
        if since is not None:
            start = max(start, since)
        horizon = now - start
        if horizon <= 0:
            return 0.0
        events = self.events
        expired = now - self.window
        i = 0
        n = len(events)
        while i < n and events[i][0] <= expired:
            i += 1
        if i:
            del events[:i]
        total = sum(a for t, a in events if t > start)
        return total / horizon


def decide(is_member: bool, own_rate: float, own_coalition_rate: float | None,
           best_rate: float | None, in_best: bool,
           policy: CoalitionPolicy) -> Action:
    """One membership decision.

    own_rate: the peer's measured download rate over the last window.
    own_coalition_rate: raw average member rate of the peer's coalition
        (None when not a member).
    best_rate: raw average member rate of the best coalition in the swarm
        (None when no coalition exists).
    in_best: whether the peer's own coalition is the best one.

    Coalition averages are discounted when judged from outside: perceived =
    (1 - discount) * raw. A non-member joins the best coalition iff its own
    rate falls short of the perceived best. A member knows its own coalition
    from the inside and compares against the raw average: it stays while it
    keeps up; otherwise it switches to the best coalition when that looks
    better (discounted, since it is judged from outside), and leaves
    entirely when its own coalition already is the best one.
    """
    factor = 1.0 - policy.discount
    if not is_member:
        if best_rate is not None and own_rate < factor * best_rate:
            return Action.JOIN_MAX
        return Action.STAY
    if own_rate >= own_coalition_rate:
        return Action.STAY
    if not in_best and best_rate is not None and own_rate < factor * best_rate:
        return Action.JOIN_MAX
    if in_best:
        return Action.LEAVE
    return Action.STAY


def coefficient_of_variation(values) -> float:
    """CoV of a sample; 0 for an empty or zero-mean sample."""
    vals = list(values)
    if not vals:
        return 0.0
    mean = sum(vals) / len(vals)
    if mean == 0:
        return 0.0
    var = sum((v - mean) ** 2 for v in vals) / len(vals)
    return var**0.5 / abs(mean)
