"""Combinatorial probability kernels for the coalition queueing model.

All functions are pure and operate on scalars (plus an occupancy profile for
the population-weighted averages), so they are safe to call from anywhere.
Binomial coefficients go through log-gamma sums; only final ratios are
exponentiated, which keeps everything finite for files of thousands of pieces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DegeneratePopulationError


@dataclass(frozen=True)
class ModelParams:
    """Scalar inputs of the analytical coalition model.

    arrival_rate: peer arrival rate lambda (peers/second)
    upload_capacity: per-peer upload capacity u_p (pieces/second)
    num_pieces: file size B in pieces
    rechoke_interval: delta_t (seconds)
    unchoke_slots: k slots per re-choking interval
    """

    arrival_rate: float
    upload_capacity: float
    num_pieces: int
    rechoke_interval: float
    unchoke_slots: int
    damping: float = 0.5
    tol: float = 1e-6
    max_iter: int = 500

    def __post_init__(self):
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be > 0")
        if self.upload_capacity <= 0:
            raise ValueError("upload_capacity must be > 0")
        if self.num_pieces < 1:
            raise ValueError("num_pieces must be >= 1")
        if self.rechoke_interval <= 0:
            raise ValueError("rechoke_interval must be > 0")
        if self.unchoke_slots < 1:
            raise ValueError("unchoke_slots must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must be in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class QueueProfile:
    """Expected occupancies and per-queue departure rates, queues 0..B-1."""

    n_bar: list[float] = field(default_factory=list)
    d_bar: list[float] = field(default_factory=list)

    @property
    def population(self) -> float:
        return sum(self.n_bar)


def log_binom(n: float, k: float) -> float:
    """log C(n, k); -inf for impossible (negative/overdrawn) configurations."""
    if k < 0 or n < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def slots_per_interval(delta_t: float, u_bar_j: float, d_bar_j: float) -> int:
    """Number of whole-piece upload slots in the effective unchoke interval.

    The effective interval is min(delta_t, 1/d_bar_j); it is chopped into
    slots of length 1/u_bar_j and only complete slots count, with a floor of
    one slot for degenerate inputs.
    """
    if delta_t <= 0:
        raise ValueError("delta_t must be > 0")
    effective = delta_t if d_bar_j <= 0 else min(delta_t, 1.0 / d_bar_j)
    if u_bar_j <= 0:
        return 1
    return max(1, math.floor(effective * u_bar_j))


def prob_interested_first_slot(i: int, j: int, B: int) -> float:
    """Probability a peer with i pieces wants something from one with j pieces.

    Both piece sets are modelled as independent uniform subsets of the B
    pieces. Equals P(|J \\ I| >= 1).
    """
    _check_ij(i, j, B)
    if i < j:
        return 1.0
    log_p_subset = log_binom(B - j, i - j) - log_binom(B, i)
    return _clamp01(1.0 - math.exp(log_p_subset))


def _surplus_exactly(i: int, j: int, B: int, s: int) -> float:
    """P(|J \\ I| = s) for independent uniform i- and j-subsets of B pieces."""
    num = log_binom(B, s) + log_binom(B - s, j - s) + log_binom(B - j, i - (j - s))
    if num == -math.inf:
        return 0.0
    return math.exp(num - log_binom(B, i) - log_binom(B, j))


def prob_interested_at_slot(i: int, j: int, B: int, slot: int) -> float:
    """Interest probability conditioned on holding the slot-th unchoke slot.

    By slot ell the downloader has already pulled ell-1 pieces from the
    uploader, so it stays interested iff the uploader's surplus exceeds
    ell-1: survival recursion P(ell) = P(ell-1) - P(surplus = ell-1).
    """
    _check_ij(i, j, B)
    if slot < 1:
        raise ValueError("slot index must be >= 1")
    if slot > j:
        return 0.0
    p = prob_interested_first_slot(i, j, B)
    for ell in range(2, slot + 1):
        p -= _surplus_exactly(i, j, B, ell - 1)
    return _clamp01(p)


def prob_interested(i: int, j: int, B: int, phi_j: int) -> float:
    """Unconditional interest probability: mean over the phi_j slots."""
    if phi_j < 1:
        raise ValueError("phi_j must be >= 1")
    _check_ij(i, j, B)
    total = 0.0
    p = None
    for ell in range(1, phi_j + 1):
        if ell > j:
            break  # all later slots contribute 0
        if p is None:
            p = prob_interested_first_slot(i, j, B)
        else:
            p = _clamp01(p - _surplus_exactly(i, j, B, ell - 1))
        total += p
    return total / phi_j


def out_connection_active_prob(profile: QueueProfile, j: int, B: int, phi_j: int) -> float:
    """Probability eta_j that an out-connection of a queue-j uploader is live:
    occupancy-weighted average of interest probabilities over leecher queues.
    """
    pop = profile.population
    if pop <= 0:
        raise DegeneratePopulationError("queue occupancies sum to zero")
    acc = 0.0
    for i, n in enumerate(profile.n_bar):
        if n > 0:
            acc += n * prob_interested(i, j, B, phi_j)
    return _clamp01(acc / pop)


def per_connection_upload_rate(u_p: float, k: int, eta_j: float) -> float:
    """Expected upload rate of one connection when k slots are open and each
    is independently live with probability eta_j (capacity split evenly over
    the live ones).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 <= eta_j <= 1:
        raise ValueError("eta_j must be in [0, 1]")
    rate = 0.0
    for w in range(1, k + 1):
        rate += (u_p / w) * math.comb(k, w) * eta_j**w * (1 - eta_j) ** (k - w)
    return rate


def prob_unchoked(population: float, k: int) -> float:
    """Probability a given peer lands in at least one of the k random slots."""
    if population < 1:
        raise DegeneratePopulationError("population must be >= 1")
    p = 1.0 / population
    return _clamp01(1.0 - (1.0 - p) ** k)


def prob_connection_active(i: int, j: int, B: int, phi_j: int,
                           population: float, k: int) -> float:
    """P(S_ij): unchoked and interested, the two factors being independent."""
    return prob_unchoked(population, k) * prob_interested(i, j, B, phi_j)


def _check_ij(i: int, j: int, B: int) -> None:
    if B < 1:
        raise ValueError("B must be >= 1")
    if not (0 <= i <= B and 0 <= j <= B):
        raise ValueError(f"piece counts must be in [0, {B}]: got i={i}, j={j}")


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)
