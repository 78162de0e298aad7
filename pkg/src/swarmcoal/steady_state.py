"""Fixed-point solver for the coalition queue chain and completion-time DP.

The swarm is a chain of B leecher queues (queue i = peers holding exactly i
pieces) plus an absorbing "done" state. Each outer iteration recomputes, from
the current occupancy/rate iterate: slot counts, interest probabilities,
per-connection upload rates, the concurrency (active in-connection)
distribution and hence the transition-rate table; the occupancies then follow
exactly from the triangular flow-balance system and are damped toward the
previous iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegeneratePopulationError, NoProgressError
from .prob_kernels import (
    ModelParams,
    QueueProfile,
    _surplus_exactly,
    log_binom,
    prob_interested_first_slot,
)


@dataclass
class SteadyState:
    params: ModelParams
    profile: QueueProfile
    gamma: np.ndarray          # (B, B+1), gamma[i, j] nonzero only for j > i
    jump_prob: np.ndarray      # (B, B+1), rows sum to 1 over j > i
    u_bar_per_queue: np.ndarray
    u_bar_global: float
    n_up: float
    s_active: np.ndarray       # P(S_i) per queue
    w_bound: np.ndarray        # integer truncation bound per queue
    phi: np.ndarray            # slots per interval per queue
    residual: float
    iterations: int


@dataclass
class CompletionTimes:
    t_remaining: list[float]   # T_0 .. T_{B-1}

    @property
    def t0(self) -> float:
        return self.t_remaining[0]


@dataclass
class SweepResult:
    grid: list[tuple]          # (delta_t, k, t0 or None)
    best: tuple                # (delta_t, k, t0)
    ties: list[tuple]
    failures: list[tuple]      # (delta_t, k, reason)


def uploader_population(profile: QueueProfile) -> float:
    """Expected number of peers with at least one complete piece (queues >= 1)."""
    return float(sum(profile.n_bar[1:]))


def in_connection_active_prob(profile: QueueProfile, s_ij_row) -> float:
    """Occupancy-weighted mean of P(S_ij) over uploader queues 1..B-1."""
    n_up = uploader_population(profile)
    if n_up <= 0:
        raise DegeneratePopulationError("no uploaders: all mass in queue 0")
    acc = 0.0
    for j, n in enumerate(profile.n_bar):
        if j >= 1 and n > 0:
            acc += n * s_ij_row[j]
    return acc / n_up


def concurrency_distribution(n_up: float, p_si: float, w_bound: int) -> np.ndarray:
    """Truncated-binomial pmf of the number of simultaneously active
    in-connections, w = 1..w_bound, normalized over that support.

    n_up may be fractional; the binomial coefficient is evaluated at real n
    via log-gamma.
    """
    if n_up < 1:
        raise DegeneratePopulationError("n_up must be >= 1")
    if w_bound < 1:
        raise ValueError("w_bound must be >= 1")
    if not 0 <= p_si <= 1:
        raise ValueError("p_si must be in [0, 1]")
    raw = _raw_binomial(n_up, p_si, w_bound)
    total = raw.sum()
    if total <= 0:
        raise NoProgressError(
            f"concurrency distribution has empty support (n_up={n_up}, "
            f"p={p_si}, bound={w_bound})")
    return raw / total


def _raw_binomial(n_up: float, p: float, w_max: int) -> np.ndarray:
    """Raw binomial masses for w = 1..w_max at real-valued n."""
    raw = np.zeros(w_max)
    if p <= 0:
        return raw
    if p >= 1:
        # every connection is live: all mass at n_up, folded into 1..w_max
        raw[min(w_max, max(1, round(n_up))) - 1] = 1.0
        return raw
    for idx, w in enumerate(range(1, w_max + 1)):
        lc = log_binom(n_up, w)
        if lc == -math.inf:
            continue
        raw[idx] = math.exp(lc + w * math.log(p) + (n_up - w) * math.log1p(-p))
    return raw


def transition_rates(u_bar_global: float, conc_dist: np.ndarray) -> np.ndarray:
    """Per-jump-width transition rates: overall rate split by jump probability."""
    return u_bar_global * np.asarray(conc_dist, dtype=float)


def _interest_mean_table(B: int, max_slots: int) -> np.ndarray:
    """M[ell, i, j] = mean interest probability over slots 1..ell.

    Uploader queue j = 0 contributes 0 everywhere. Computed once per solve;
    independent of the occupancy iterate.
    """
    M = np.zeros((max_slots + 1, B, B))
    for j in range(1, B):
        for i in range(B):
            p = prob_interested_first_slot(i, j, B)
            total = p
            M[1, i, j] = total
            for ell in range(2, max_slots + 1):
                if ell <= j:
                    p = p - _surplus_exactly(i, j, B, ell - 1)
                    p = 0.0 if p < 0 else (1.0 if p > 1 else p)
                else:
                    p = 0.0
                total += p
                M[ell, i, j] = total / ell
    return M


def solve(params: ModelParams) -> SteadyState:
    """Damped fixed-point iteration on the occupancy/transition-rate pair."""
    B = params.num_pieces
    lam = params.arrival_rate
    u_p = params.upload_capacity
    k = params.unchoke_slots
    dt = params.rechoke_interval

    if B < 2:
        raise NoProgressError(
            "chain with a single leecher queue has no peer uploaders; "
            "queue 0 departure rate is identically zero")

    max_slots = max(1, math.ceil(dt * u_p))
    M = _interest_mean_table(B, max_slots)

    n_bar = np.full(B, lam / u_p)
    u_bar_q = np.full(B, u_p)        # previous-iterate per-queue rates

    state_parts = None
    converged = False
    iterations = 0
    for iterations in range(1, params.max_iter + 1):
        # Upload slots per re-choking interval: delta_t chopped into
        # whole-piece slots of length 1/u_bar_j. The count is generally not
        # an integer; interpolating the slot-averaged interest between the
        # adjacent integer counts keeps the map continuous (an integer snap
        # limit-cycles at slot boundaries).
        slots_real = np.clip(dt * u_bar_q, 1.0, float(max_slots))
        phi = np.rint(slots_real).astype(int)

        PB = np.empty((B, B))
        for j in range(B):
            lo = math.floor(slots_real[j])
            hi = min(lo + 1, max_slots)
            frac = slots_real[j] - lo
            PB[:, j] = (1 - frac) * M[lo, :, j] + frac * M[hi, :, j]
        PB[:, 0] = 0.0

        pop = n_bar.sum()
        if pop < 1:
            raise DegeneratePopulationError(
                f"population fell below one peer during iteration ({pop:.3g})")
        eta = (n_bar @ PB) / pop

        # Per-connection upload rate conditioned on the connection being live
        # (the transition rates downstream already condition on at least one
        # live in-connection): capacity splits over this connection plus the
        # other k-1 slots, each live with probability eta, which closes to
        # E[u_p/(M+1)] = u_p (1-(1-eta)^k) / (k eta) for M ~ Bin(k-1, eta).
        # Damped against the previous iterate (the slot count feeds back
        # into eta).
        u_new = np.where(eta > 1e-12,
                         u_p * (1.0 - (1.0 - eta) ** k)
                         / (k * np.maximum(eta, 1e-12)),
                         u_p)
        u_bar_q = (1 - params.damping) * u_bar_q + params.damping * u_new
        u_bar_q[0] = 0.0

        # k slots drawn without replacement among the other peers
        p_unchoked = min(1.0, k / max(pop - 1.0, 1.0))
        PS = p_unchoked * PB           # column 0 already zero

        n_up = float(n_bar[1:].sum())
        if n_up <= 0:
            raise NoProgressError("uploader population collapsed to zero")
        s_active = (PS[:, 1:] @ n_bar[1:]) / n_up
        u_bar_global = float((n_bar[1:] @ u_bar_q[1:]) / n_up)
        if u_bar_global <= 0:
            raise NoProgressError("global per-connection upload rate is zero")

        cap = max(1, math.floor(pop - 1))
        w_bound = np.minimum(B - np.arange(B), cap).astype(int)
        w_bound = np.maximum(w_bound, 1)

        # Transition rates: a sojourn ends at rate u_bar only while at least
        # one in-connection is live; the no-connection mass stretches the
        # sojourn, and widths beyond w_bound fold back into the admissible
        # range (extra connections cannot advance the queue index further).
        jump = np.zeros((B, B + 1))
        gamma = np.zeros((B, B + 1))
        for i in range(B):
            wb = int(w_bound[i])
            raw = _raw_binomial(n_up, float(s_active[i]), wb)
            live = raw.sum()
            if live <= 0:
                raise NoProgressError(
                    f"queue {i} has no live-connection mass "
                    f"(P(S_i)={s_active[i]:.3g})")
            idle = (1.0 - float(s_active[i])) ** n_up
            jump[i, i + 1: i + 1 + wb] = raw / live
            gamma[i, i + 1: i + 1 + wb] = u_bar_global * raw / (idle + live)

        # exact triangular flow-balance solve for the current gamma
        row_rate = gamma.sum(axis=1)
        new_n = np.zeros(B)
        new_n[0] = lam / row_rate[0]
        for i in range(1, B):
            inflow = float(gamma[:i, i] @ new_n[:i])
            new_n[i] = inflow / row_rate[i]

        next_n = (1 - params.damping) * n_bar + params.damping * new_n
        change = float(np.max(np.abs(next_n - n_bar) / np.maximum(n_bar, 1e-300)))
        state_parts = (phi, PB, PS, eta, u_bar_q.copy(), u_bar_global, n_up,
                       s_active, w_bound, jump, gamma)
        n_bar = next_n
        if change <= params.tol:
            converged = True
            break

    phi, PB, PS, eta, u_bar_q, u_bar_global, n_up, s_active, w_bound, jump, gamma = state_parts
    residual = _flow_residual(lam, n_bar, gamma)
    if not converged:
        raise ConvergenceError(
            f"fixed point did not converge in {params.max_iter} iterations "
            f"(last residual {residual:.3g})",
            residual=residual, iterations=iterations)

    profile = QueueProfile(n_bar=list(map(float, n_bar)),
                           d_bar=list(map(float, gamma.sum(axis=1))))
    return SteadyState(params=params, profile=profile, gamma=gamma,
                       jump_prob=jump, u_bar_per_queue=u_bar_q,
                       u_bar_global=u_bar_global, n_up=n_up,
                       s_active=s_active, w_bound=w_bound, phi=phi,
                       residual=residual, iterations=iterations)


def _flow_residual(lam: float, n_bar: np.ndarray, gamma: np.ndarray) -> float:
    B = len(n_bar)
    out = n_bar * gamma.sum(axis=1)
    res = abs(lam - out[0]) / lam
    for i in range(1, B):
        inflow = float(gamma[:i, i] @ n_bar[:i])
        res = max(res, abs(inflow - out[i]) / max(lam, inflow))
    return res


def completion_time(state: SteadyState) -> CompletionTimes:
    """Backward DP for the expected remaining download time per queue."""
    B = state.params.num_pieces
    gamma = state.gamma
    jump = state.jump_prob
    rates = gamma.sum(axis=1)
    for i, r in enumerate(rates):
        if r <= 0:
            raise NoProgressError(f"queue {i} has zero total departure rate")
    T = np.zeros(B + 1)        # T[B] = 0 (done)
    T[B - 1] = 1.0 / gamma[B - 1, B]
    for i in range(B - 2, -1, -1):
        T[i] = 1.0 / rates[i] + float(jump[i, i + 1:] @ T[i + 1:])
    return CompletionTimes(t_remaining=list(map(float, T[:B])))


def sweep(params_base: ModelParams, delta_t_list, k_list) -> SweepResult:
    """Grid search of expected completion time over (delta_t, k)."""
    if not delta_t_list or not k_list:
        raise ValueError("delta_t_list and k_list must be nonempty")
    grid = []
    failures = []
    for dt in delta_t_list:
        for k in k_list:
            from dataclasses import replace
            p = replace(params_base, rechoke_interval=dt, unchoke_slots=k)
            try:
                t0 = completion_time(solve(p)).t0
            except (ConvergenceError, NoProgressError,
                    DegeneratePopulationError) as exc:
                grid.append((dt, k, None))
                failures.append((dt, k, str(exc)))
                continue
            grid.append((dt, k, t0))
    ok = [g for g in grid if g[2] is not None]
    if not ok:
        raise ConvergenceError("every grid point failed to converge")
    best_t = min(g[2] for g in ok)
    ties = [g for g in ok if g[2] <= best_t * (1 + 1e-12)]
    return SweepResult(grid=grid, best=ties[0], ties=ties, failures=failures)
