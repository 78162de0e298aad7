"""Piece selection strategies and data-availability metrics.

Pure functions over an explicitly passed ownership matrix (or cheap mask/count
views of it); the simulator owns the live state and calls the low-level
pickers, while the matrix-based entry points mirror the worked-example
semantics and back the exhaustive oracle tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class PieceMatrix:
    """Ownership matrix: v[piece][peer] = 1 if the peer holds the piece."""

    v: list[list[int]]

    @property
    def num_pieces(self) -> int:
        return len(self.v)

    @property
    def num_peers(self) -> int:
        return len(self.v[0]) if self.v else 0

    def replication(self) -> list[int]:
        return [sum(row) for row in self.v]

    def per_peer_counts(self) -> list[int]:
        return [sum(self.v[b][p] for b in range(self.num_pieces))
                for p in range(self.num_peers)]

    def owned_mask(self, peer: int) -> int:
        mask = 0
        for b in range(self.num_pieces):
            if self.v[b][peer]:
                mask |= 1 << b
        return mask


def iter_bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def pick_rarest(eligible_mask: int, counts, rng) -> int:
    """Minimum-replication piece among the eligible set; ties uniform random."""
    best = 1 << 62
    ties = []
    m = eligible_mask
    while m:
        low = m & -m
        b = low.bit_length() - 1
        m ^= low
        c = counts[b]
        if c < best:
            best = c
            ties = [b]
        elif c == best:
            ties.append(b)
    if len(ties) == 1:
        return ties[0]
    return ties[rng.randrange(len(ties))]


def rarest_set_mask(eligible_mask: int, counts) -> int:
    """Bitmask of eligible pieces attaining the minimum replication count."""
    best = 1 << 62
    mask = 0
    m = eligible_mask
    while m:
        low = m & -m
        b = low.bit_length() - 1
        m ^= low
        c = counts[b]
        if c < best:
            best = c
            mask = low
        elif c == best:
            mask |= low
    return mask


def pick_peer_balance_from(candidates_mask: int, members) -> int:
    """Among candidate pieces, pick the one whose poorest missing member owns
    the fewest pieces; ties on that count break to the lowest piece index.

    members: iterable of (piece_count, owned_mask), the chooser included.
    """
    order = sorted(members)
    best_count = None
    hits = 0
    for cnt, owned in order:
        if best_count is not None and cnt > best_count:
            break
        miss = candidates_mask & ~owned
        if miss:
            best_count = cnt
            hits |= miss
    if not hits:
        # every member owns every candidate: degenerate, lowest index
        hits = candidates_mask
    return (hits & -hits).bit_length() - 1


def select_rarest_first(downloader: int, uploader: int, matrix: PieceMatrix,
                        scope_peers, rng, in_flight: int = 0,
                        partial_mask: int = 0) -> int | None:
    """Plain rarest-first pick for `downloader` served by `uploader`.

    scope_peers: peer indices whose holdings define the replication counts
    (local neighborhood or the whole coalition). Partially finished pieces
    are preferred over starting new ones. Returns None when not interested.
    """
    up_mask = matrix.owned_mask(uploader)
    down_mask = matrix.owned_mask(downloader)
    eligible = up_mask & ~down_mask & ~in_flight
    if not eligible:
        return None
    pool = eligible & partial_mask or eligible
    counts = [sum(matrix.v[b][p] for p in scope_peers)
              for b in range(matrix.num_pieces)]
    return pick_rarest(pool, counts, rng)


def select_peer_balance(downloader: int, uploader: int, matrix: PieceMatrix,
                        in_flight: int = 0,
                        partial_mask: int = 0) -> int | None:
    """Peer-balance rarest-first: double minimization over the rarest set.

    First restrict to the rarest pieces coalition-wide, then among those pick
    the piece missed by the peer holding the fewest pieces (ties: lowest piece
    index). Deterministic given the matrix.
    """
    up_mask = matrix.owned_mask(uploader)
    down_mask = matrix.owned_mask(downloader)
    eligible = up_mask & ~down_mask & ~in_flight
    if not eligible:
        return None
    pool = eligible & partial_mask or eligible
    counts = matrix.replication()
    rarest = rarest_set_mask(pool, counts)
    if rarest & (rarest - 1) == 0:
        return (rarest & -rarest).bit_length() - 1
    per_peer = matrix.per_peer_counts()
    members = [(per_peer[p], matrix.owned_mask(p))
               for p in range(matrix.num_peers)]
    return pick_peer_balance_from(rarest, members)


def availability_upper_bound(u_s: float, B: int, t: float) -> int:
    """Distinct pieces the seed could have disseminated by time t."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return min(math.floor(u_s * t + 1e-9), B)


@dataclass
class AvailabilityTrace:
    samples: list  # (t, distinct-piece count), t relative to seed start
    t_star: float
    n_c: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    avg_loss: float = 0.0
    e_pd: float | None = None


def availability_loss(samples, u_s: float, B: int, t_star: float):
    """Loss series L(t) on (0, t_star] plus its trapezoidal time average.

    samples: (t, distinct count) pairs with t measured from the seed's first
    upload. Samples beyond t_star are ignored.
    """
    loss = []
    for t, n_d in samples:
        if t <= 0 or t > t_star + 1e-9:
            continue
        n_c = availability_upper_bound(u_s, B, t)
        if n_d > n_c + 1e-9:
            raise ValueError(f"distinct count {n_d} exceeds bound {n_c} at t={t}")
        if n_c > 0:
            loss.append((t, (n_c - n_d) / n_c))
    if not loss:
        return [], 0.0
    # trapezoid over (0, t_star]; extend flat to the window edges
    pts = [(0.0, loss[0][1])] + loss
    if pts[-1][0] < t_star:
        pts.append((t_star, pts[-1][1]))
    area = 0.0
    for (t0, l0), (t1, l1) in zip(pts, pts[1:]):
        area += 0.5 * (l0 + l1) * (t1 - t0)
    return loss, area / t_star


def track_empty_pd(samples) -> float | None:
    """Mean count of peers with an empty partial-minus-downloading set,
    sampled at the instants peers pick a piece to request from the seed."""
    if not samples:
        return None
    return sum(c for _, c in samples) / len(samples)
