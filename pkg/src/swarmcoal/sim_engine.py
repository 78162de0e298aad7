"""Event-driven fluid simulator of a swarm with peer coalitions.

Peers arrive (Poisson stream and/or an initial flash crowd), download a
B-piece file from each other and from an always-on seed, and depart the
moment they hold every piece. Upload capacity is fluid and split evenly over
a peer's active transfers; re-choking happens on a fixed per-peer clock.
Coalition members unchoke k random fellow members; everyone else runs
tit-for-tat with one optimistic slot. Piece selection is pluggable per group
(random / rarest-first / peer-balance) with a finish-partials-first rule.

Determinism: one `random.Random(seed)` drives every stochastic choice, all
candidate lists are iterated in ascending peer id, and simultaneous events
are ordered by (time, kind, id). Identical configs and seeds reproduce
byte-identical outputs.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from heapq import heappush, heappop

from .coalition_dynamics import Action, CoalitionPolicy, RateWindow, decide
from .errors import ScenarioError
from .piece_strategy import iter_bits, pick_peer_balance_from, pick_rarest, \
    rarest_set_mask

_EPS = 1e-9

# event kinds, in tie-break order at equal timestamps
_EV_COMPLETE = 0
_EV_ARRIVAL = 1
_EV_RECHOKE = 2
_EV_OPTIMISTIC = 3
_EV_DECISION = 4
_EV_MEASURE = 5

STRATEGIES = ("random", "rarest_local", "rarest_coalition", "peer_balance")
MEMBERSHIP_KINDS = ("none", "all", "p_join", "percentile", "two_percentile",
                    "dynamic")


@dataclass(frozen=True)
class MembershipRule:
    """How arriving peers are assigned to coalitions.

    kind:
      none           - no coalition, plain tit-for-tat swarm
      all            - every peer joins coalition 1
      p_join         - joins coalition 1 with probability p_join
      percentile     - joins coalition 1 iff capacity percentile <= q_low
      two_percentile - percentile <= q_low -> coalition 1, else
                       percentile >= q_high -> coalition 2
      dynamic        - joins with probability policy.join_prob, then follows
                       the periodic join/leave decision rule
    """

    kind: str = "none"
    p_join: float = 1.0
    q_low: float = 50.0
    q_high: float = 50.0
    n_coalitions: int = 1
    split_percentile: float = 50.0
    policy: CoalitionPolicy | None = None

    def __post_init__(self):
        if self.kind not in MEMBERSHIP_KINDS:
            raise ScenarioError(f"unknown membership kind: {self.kind!r}")
        if not 0 <= self.p_join <= 1:
            raise ScenarioError("p_join must be in [0, 1]")
        for name in ("q_low", "q_high", "split_percentile"):
            v = getattr(self, name)
            if not 0 <= v <= 100:
                raise ScenarioError(f"{name} must be a percentile in [0, 100]")
        if self.n_coalitions not in (1, 2):
            raise ScenarioError("n_coalitions must be 1 or 2")
        if self.kind == "dynamic" and self.policy is None:
            object.__setattr__(self, "policy", CoalitionPolicy())


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulation run (seed passed separately)."""

    num_pieces: int
    seed_capacity: float
    rechoke_interval: float
    unchoke_slots: int
    duration: float
    arrival_rate: float = 0.0
    peer_capacity: float | None = None
    capacity_dist: object | None = None  # needs .value_at(percentile)
    seed_rechoke: float | None = None
    seed_slots: int | None = None
    optimistic_interval: float | None = None
    steady_window: tuple | None = None
    membership: MembershipRule = field(default_factory=MembershipRule)
    strategy_coalition: str = "rarest_local"
    strategy_outside: str = "rarest_local"
    initial_peers: int = 0
    initial_spread: float = 0.0
    measurement_interval: float = 10.0
    track_availability: bool = False
    blocks_per_piece: int = 16

    def __post_init__(self):
        if self.num_pieces < 1:
            raise ScenarioError("num_pieces must be >= 1")
        if self.seed_capacity <= 0:
            raise ScenarioError("seed_capacity must be > 0")
        if self.rechoke_interval <= 0:
            raise ScenarioError("rechoke_interval must be > 0")
        if self.unchoke_slots < 1:
            raise ScenarioError("unchoke_slots must be >= 1")
        if self.duration <= 0:
            raise ScenarioError("duration must be > 0")
        if self.arrival_rate < 0:
            raise ScenarioError("arrival_rate must be >= 0")
        if self.arrival_rate == 0 and self.initial_peers == 0:
            raise ScenarioError("no peers: arrival_rate=0 and initial_peers=0")
        if self.peer_capacity is None and self.capacity_dist is None:
            raise ScenarioError("need peer_capacity or capacity_dist")
        if self.peer_capacity is not None and self.peer_capacity < 0:
            raise ScenarioError("peer_capacity must be >= 0")
        for name in ("strategy_coalition", "strategy_outside"):
            if getattr(self, name) not in STRATEGIES:
                raise ScenarioError(f"unknown strategy for {name}")
        if self.initial_peers < 0 or self.initial_spread < 0:
            raise ScenarioError("initial flash-crowd values must be >= 0")
        if self.measurement_interval <= 0:
            raise ScenarioError("measurement_interval must be > 0")
        if self.blocks_per_piece < 1:
            raise ScenarioError("blocks_per_piece must be >= 1")
        if self.steady_window is not None:
            lo, hi = self.steady_window
            if not 0 <= lo < hi:
                raise ScenarioError("steady_window must satisfy 0 <= lo < hi")

    @property
    def seed_rechoke_interval(self) -> float:
        return self.seed_rechoke if self.seed_rechoke is not None \
            else self.rechoke_interval

    @property
    def seed_unchoke_slots(self) -> int:
        return self.seed_slots if self.seed_slots is not None \
            else self.unchoke_slots

    @property
    def optimistic_period(self) -> float:
        return self.optimistic_interval if self.optimistic_interval is not None \
            else 3.0 * self.rechoke_interval


@dataclass
class CompletionRecord:
    pid: int
    arrival: float
    completion: float
    coalition: int | None
    capacity: float

    @property
    def download_time(self) -> float:
        return self.completion - self.arrival


@dataclass
class SimResult:
    config: SimConfig
    seed: int
    completions: list
    occupancy: list          # (t, ((pieces_owned, count), ...))
    coalition_sizes: list    # (t, coalition_id, size)
    availability: list       # (t, distinct owned pieces), absolute times
    empty_pd_samples: list   # (t, peers with empty partial-minus-downloading)
    seed_start_time: float | None
    total_arrivals: int
    final_time: float

    def steady_download_times(self):
        """Download durations of peers that arrived and finished inside the
        steady-state window."""
        win = self.config.steady_window
        if win is None:
            return [c.download_time for c in self.completions]
        lo, hi = win
        return [c.download_time for c in self.completions
                if c.arrival >= lo and c.completion <= hi]


class _Transfer:
    __slots__ = ("up", "down", "piece", "remaining")

    def __init__(self, up, down, piece, remaining):
        self.up = up
        self.down = down
        self.piece = piece
        self.remaining = remaining


class _Peer:
    __slots__ = ("pid", "capacity", "percentile", "coalition", "owned",
                 "owned_count", "partial", "partial_mask", "inflight",
                 "inflight_mask", "active", "unchoked", "optimistic",
                 "unchoked_by", "recv_from", "rate_window", "arrival",
                 "last_update", "rate_share", "version")

    def __init__(self, pid, capacity, percentile, arrival):
        self.pid = pid
        self.capacity = capacity
        self.percentile = percentile
        self.coalition = None
        self.owned = 0
        self.owned_count = 0
        self.partial = {}
        self.partial_mask = 0
        self.inflight = {}
        self.inflight_mask = 0
        self.active = {}       # downloader pid -> _Transfer (my uploads)
        self.unchoked = []     # pids I currently grant, sorted
        self.optimistic = None
        self.unchoked_by = set()
        self.recv_from = {}
        self.rate_window = None
        self.arrival = arrival
        self.last_update = arrival
        self.rate_share = 0.0
        self.version = 0


class _Coalition:
    __slots__ = ("members", "eff", "own")

    def __init__(self, num_pieces):
        self.members = set()
        self.eff = [0] * num_pieces   # owned + in-flight copies
        self.own = [0] * num_pieces


class _Engine:
    def __init__(self, config: SimConfig, seed: int):
        self.cfg = config
        self.seed_value = seed
        self.rng = random.Random(seed)
        self.B = config.num_pieces
        self.full_mask = (1 << self.B) - 1
        self.t = 0.0
        self.heap = []
        self.peers = {}
        self.next_pid = 1
        self.seed_peer = _Peer(0, config.seed_capacity, 100.0, 0.0)
        self.seed_peer.owned = self.full_mask
        self.seed_peer.owned_count = self.B
        self.eff_global = [0] * self.B
        self.own_global = [0] * self.B
        self.distinct_owned = 0
        self.coalitions = {}
        self.completions = []
        self.occupancy = []
        self.coalition_sizes = []
        self.availability = []
        self.empty_pd_samples = []
        self.seed_start_time = None
        self.total_arrivals = 0
        mk = config.membership.kind
        self.track_tft = mk != "all"
        self.track_rates = mk == "dynamic"
        self.track_avail = config.track_availability

    # ------------------------------------------------------------------ setup

    def run(self) -> SimResult:
        cfg = self.cfg
        for t in sorted(self.rng.uniform(0.0, cfg.initial_spread)
                        for _ in range(cfg.initial_peers)):
            heappush(self.heap, (t, _EV_ARRIVAL, 0, 0))
        if cfg.arrival_rate > 0:
            heappush(self.heap, (self.rng.expovariate(cfg.arrival_rate),
                                 _EV_ARRIVAL, 0, 1))
        heappush(self.heap, (0.0, _EV_RECHOKE, 0, 0))
        heappush(self.heap, (0.0, _EV_MEASURE, 0, 0))
        handlers = {
            _EV_COMPLETE: self._on_complete,
            _EV_ARRIVAL: self._on_arrival,
            _EV_RECHOKE: self._on_rechoke,
            _EV_OPTIMISTIC: self._on_optimistic,
            _EV_DECISION: self._on_decision,
            _EV_MEASURE: self._on_measure,
        }
        while self.heap:
            t, kind, a, b = heappop(self.heap)
            if t > cfg.duration:
                break
            self.t = t
            handlers[kind](a, b)
        return SimResult(
            config=cfg, seed=self.seed_value, completions=self.completions,
            occupancy=self.occupancy, coalition_sizes=self.coalition_sizes,
            availability=self.availability,
            empty_pd_samples=self.empty_pd_samples,
            seed_start_time=self.seed_start_time,
            total_arrivals=self.total_arrivals, final_time=self.t)

    # ------------------------------------------------------------ peer lookup

    def _peer(self, pid):
        return self.seed_peer if pid == 0 else self.peers.get(pid)

    def _coalition(self, cid) -> _Coalition:
        co = self.coalitions.get(cid)
        if co is None:
            co = self.coalitions[cid] = _Coalition(self.B)
        return co

    # --------------------------------------------------------------- arrivals

    def _on_arrival(self, _a, reschedule):
        cfg = self.cfg
        if reschedule:
            heappush(self.heap,
                     (self.t + self.rng.expovariate(cfg.arrival_rate),
                      _EV_ARRIVAL, 0, 1))
        if cfg.capacity_dist is not None:
            pct = self.rng.uniform(0.0, 100.0)
            cap = cfg.capacity_dist.value_at(pct)
        else:
            pct = 50.0
            cap = cfg.peer_capacity
        p = _Peer(self.next_pid, cap, pct, self.t)
        self.next_pid += 1
        self.total_arrivals += 1
        self.peers[p.pid] = p
        if self.track_rates:
            pol = cfg.membership.policy
            p.rate_window = RateWindow(pol.decision_stride
                                       * cfg.rechoke_interval)
        cid = self._initial_coalition(p)
        if cid is not None:
            self._join_coalition(p, cid)
        heappush(self.heap, (self.t, _EV_RECHOKE, p.pid, 0))
        heappush(self.heap, (self.t, _EV_OPTIMISTIC, p.pid, 0))
        if cfg.membership.kind == "dynamic":
            pol = cfg.membership.policy
            first = self.t + pol.decision_delay * cfg.rechoke_interval
            heappush(self.heap, (first, _EV_DECISION, p.pid, 0))

    def _initial_coalition(self, p):
        m = self.cfg.membership
        if m.kind == "none":
            return None
        if m.kind == "all":
            return 1
        if m.kind == "p_join":
            return 1 if self.rng.random() < m.p_join else None
        if m.kind == "percentile":
            return 1 if p.percentile <= m.q_low else None
        if m.kind == "two_percentile":
            if p.percentile <= m.q_low:
                return 1
            if p.percentile >= m.q_high:
                return 2
            return None
        # dynamic
        if self.rng.random() >= m.policy.join_prob:
            return None
        if m.n_coalitions == 1:
            return 1
        return 1 if p.percentile <= m.split_percentile else 2

    # --------------------------------------------------- coalition membership

    def _join_coalition(self, p, cid):
        co = self._coalition(cid)
        co.members.add(p.pid)
        p.coalition = cid
        for b in iter_bits(p.owned):
            co.own[b] += 1
            co.eff[b] += 1
        for b in iter_bits(p.inflight_mask):
            co.eff[b] += 1

    def _leave_coalition(self, p):
        co = self.coalitions[p.coalition]
        co.members.discard(p.pid)
        for b in iter_bits(p.owned):
            co.own[b] -= 1
            co.eff[b] -= 1
        for b in iter_bits(p.inflight_mask):
            co.eff[b] -= 1
        p.coalition = None

    # ------------------------------------------------------------ fluid flow

    def _advance(self, u):
        dt = self.t - u.last_update
        if dt > 0.0 and u.active:
            dec = u.rate_share * dt
            if self.track_tft:
                for tr in u.active.values():
                    tr.remaining -= dec
                    d = tr.down
                    d.recv_from[u.pid] = d.recv_from.get(u.pid, 0.0) + dec
            else:
                for tr in u.active.values():
                    tr.remaining -= dec
        u.last_update = self.t

    def _reschedule(self, u):
        u.version += 1
        n = len(u.active)
        if not n:
            u.rate_share = 0.0
            return
        u.rate_share = u.capacity / n
        if u.rate_share <= 0.0:
            return
        min_rem = min(tr.remaining for tr in u.active.values())
        if min_rem < 0.0:
            min_rem = 0.0
        heappush(self.heap, (self.t + min_rem / u.rate_share,
                             _EV_COMPLETE, u.pid, u.version))

    # --------------------------------------------------------- piece choice

    def _select_piece(self, u, d):
        elig = u.owned & ~d.owned & ~d.inflight_mask
        if not elig:
            return None
        if d.coalition is not None:
            strat = self.cfg.strategy_coalition
            co = self.coalitions[d.coalition]
        else:
            strat = self.cfg.strategy_outside
            co = None
        if strat == "peer_balance" and co is not None:
            return self._select_peer_balance(u, d, elig, co)
        # rarest-first ranks by ownership counts; only the peer-balance
        # strategy coordinates on in-flight copies as well
        if strat == "rarest_coalition" and co is not None:
            counts = co.own
        else:
            counts = self.own_global
        # partially finished pieces are completed before a new piece is begun
        pool = elig & d.partial_mask or elig
        if strat == "random":
            bits = list(iter_bits(pool))
            return bits[self.rng.randrange(len(bits))]
        return pick_rarest(pool, counts, self.rng)

    def _select_peer_balance(self, u, d, elig, co):
        eff = co.eff
        own = co.own
        missing = 0
        m = elig
        while m:
            low = m & -m
            b = low.bit_length() - 1
            if eff[b] == 0:
                missing |= low
            elif own[b] == 0:
                # a fellow member is already fetching the first copy of this
                # piece; requesting it too would only duplicate seed work
                elig ^= low
            m ^= low
        if missing:
            pool = missing & d.partial_mask or missing
        elif not elig:
            return None
        else:
            pool = elig & d.partial_mask or elig
            pool = rarest_set_mask(pool, eff)
        if pool & (pool - 1) == 0:
            return (pool & -pool).bit_length() - 1
        peers = self.peers
        members = [(peers[pid].owned_count, peers[pid].owned)
                   for pid in co.members if pid in peers]
        return pick_peer_balance_from(pool, members)

    # ------------------------------------------------------------- transfers

    def _try_start(self, u, d):
        if d.pid in u.active or u.pid not in d.unchoked_by:
            return
        piece = self._select_piece(u, d)
        if piece is None:
            return
        self._start(u, d, piece)

    def _start(self, u, d, piece):
        bit = 1 << piece
        if d.partial_mask & bit:
            remaining = d.partial.pop(piece)
            d.partial_mask &= ~bit
        else:
            remaining = 1.0
        self._advance(u)
        tr = _Transfer(u, d, piece, remaining)
        u.active[d.pid] = tr
        d.inflight[piece] = tr
        d.inflight_mask |= bit
        self.eff_global[piece] += 1
        if d.coalition is not None:
            self.coalitions[d.coalition].eff[piece] += 1
        self._reschedule(u)
        if u.pid == 0:
            if self.seed_start_time is None:
                self.seed_start_time = self.t
            if self.track_avail:
                empty = sum(1 for p in self.peers.values()
                            if not p.partial_mask & ~p.inflight_mask)
                self.empty_pd_samples.append((self.t, empty))

    def _detach(self, tr):
        """Remove a transfer from both endpoints' live maps (no accounting)."""
        u, d = tr.up, tr.down
        if u.active.get(d.pid) is tr:
            del u.active[d.pid]
        if d.inflight.get(tr.piece) is tr:
            del d.inflight[tr.piece]
            d.inflight_mask &= ~(1 << tr.piece)

    def _drop_eff(self, tr):
        self.eff_global[tr.piece] -= 1
        if tr.down.coalition is not None:
            self.coalitions[tr.down.coalition].eff[tr.piece] -= 1

    def _cancel(self, tr):
        """Interrupt a transfer; nearly finished ones complete instead.

        Returns True if the transfer actually completed."""
        u, d = tr.up, tr.down
        self._advance(u)
        if tr.remaining <= _EPS:
            self._detach(tr)
            self._reschedule(u)
            self._finish(tr)
            return True
        self._detach(tr)
        self._reschedule(u)
        self._drop_eff(tr)
        self._strand(d, tr.piece, tr.remaining)
        # the piece is requestable again: poke idle uploaders that hold it
        for upid in sorted(d.unchoked_by):
            u2 = self._peer(upid)
            if u2 is not None and d.pid not in u2.active:
                self._try_start(u2, d)
        return False

    def _strand(self, d, piece, remaining):
        """Record an interrupted piece, keeping only whole completed blocks.

        Sub-block residue is discarded: if less than one block arrived, the
        piece is not partially held at all and a later request starts fresh.
        """
        bp = self.cfg.blocks_per_piece
        blocks = math.floor((1.0 - remaining) * bp + 1e-9)
        if blocks <= 0:
            return
        d.partial[piece] = 1.0 - blocks / bp
        d.partial_mask |= 1 << piece

    def _finish(self, tr):
        d = tr.down
        piece = tr.piece
        bit = 1 << piece
        if d.inflight.get(piece) is tr:
            del d.inflight[piece]
            d.inflight_mask &= ~bit
        d.owned |= bit
        d.owned_count += 1
        self.own_global[piece] += 1
        new_distinct = self.own_global[piece] == 1
        if new_distinct:
            self.distinct_owned += 1
        if d.coalition is not None:
            self.coalitions[d.coalition].own[piece] += 1
        if self.track_rates and d.rate_window is not None:
            d.rate_window.credit(self.t, 1.0)
        if d.owned_count == self.B:
            self._depart(d)
            return
        self._try_start(tr.up, d)
        # d can now serve granted-but-idle downloaders that lacked this piece
        for pid in d.unchoked:
            if pid not in d.active:
                tgt = self.peers.get(pid)
                if tgt is not None:
                    self._try_start(d, tgt)

    def _on_complete(self, upid, version):
        u = self._peer(upid)
        if u is None or u.version != version:
            return
        self._advance(u)
        due = sorted((tr for tr in u.active.values()
                      if tr.remaining <= _EPS), key=lambda tr: tr.down.pid)
        if not due:
            self._reschedule(u)
            return
        for tr in due:
            del u.active[tr.down.pid]
        self._reschedule(u)
        for tr in due:
            if tr.down.pid in self.peers:
                self._finish(tr)
        if upid == 0 and self.track_avail:
            self.availability.append((self.t, self.distinct_owned))

    # ------------------------------------------------------------- departure

    def _depart(self, d):
        self.completions.append(CompletionRecord(
            d.pid, d.arrival, self.t, d.coalition, d.capacity))
        for tr in list(d.inflight.values()):
            u = tr.up
            self._advance(u)
            self._detach(tr)
            self._reschedule(u)
            self._drop_eff(tr)
        self._advance(d)
        for tr in list(d.active.values()):
            down = tr.down
            self._detach(tr)
            self.eff_global[tr.piece] -= 1
            if down.coalition is not None:
                self.coalitions[down.coalition].eff[tr.piece] -= 1
            if tr.remaining > _EPS:
                self._strand(down, tr.piece, tr.remaining)
            down.unchoked_by.discard(d.pid)
            for upid in sorted(down.unchoked_by):
                u2 = self._peer(upid)
                if u2 is not None and down.pid not in u2.active:
                    self._try_start(u2, down)
        d.version += 1
        for upid in sorted(d.unchoked_by):
            u = self._peer(upid)
            if u is None:
                continue
            if d.pid in u.unchoked:
                u.unchoked.remove(d.pid)
            if u.optimistic == d.pid:
                u.optimistic = None
        for pid in d.unchoked:
            tgt = self.peers.get(pid)
            if tgt is not None:
                tgt.unchoked_by.discard(d.pid)
        if d.coalition is not None:
            self._leave_coalition(d)
        for b in iter_bits(d.owned):
            self.own_global[b] -= 1
            self.eff_global[b] -= 1
            if self.own_global[b] == 0:
                self.distinct_owned -= 1
        del self.peers[d.pid]

    # -------------------------------------------------------------- choking

    def _apply_unchokes(self, u, regular, optimistic):
        new_all = list(dict.fromkeys(regular + ([optimistic] if
                                                optimistic is not None else [])))
        new_set = set(new_all)
        for pid in list(u.unchoked):
            if pid not in new_set:
                d = self.peers.get(pid)
                if d is None:
                    continue
                d.unchoked_by.discard(u.pid)
                tr = u.active.get(pid)
                if tr is not None:
                    self._cancel(tr)
        for pid in new_all:
            d = self.peers.get(pid)
            if d is not None:
                d.unchoked_by.add(u.pid)
        u.unchoked = sorted(new_set)
        u.optimistic = optimistic
        for pid in u.unchoked:
            d = self.peers.get(pid)
            if d is not None and pid not in u.active:
                self._try_start(u, d)

    def _on_rechoke(self, pid, _b):
        if pid == 0:
            self._seed_rechoke()
            heappush(self.heap, (self.t + self.cfg.seed_rechoke_interval,
                                 _EV_RECHOKE, 0, 0))
            return
        p = self.peers.get(pid)
        if p is None:
            return
        heappush(self.heap, (self.t + self.cfg.rechoke_interval,
                             _EV_RECHOKE, pid, 0))
        if p.coalition is not None:
            cands = sorted(c for c in self.coalitions[p.coalition].members
                           if c != pid)
            k = self.cfg.unchoke_slots
            chosen = cands if len(cands) <= k else self.rng.sample(cands, k)
            self._apply_unchokes(p, sorted(chosen), None)
        else:
            self._tft_rechoke(p)

    def _tft_rechoke(self, p):
        # settle incoming flows so the received-bytes ranking is current
        for tr in list(p.inflight.values()):
            self._advance(tr.up)
        recv = p.recv_from
        cands = [d.pid for d in self.peers.values()
                 if d.pid != p.pid and p.owned & ~d.owned]
        cands.sort(key=lambda pid: (-recv.get(pid, 0.0), pid))
        regular = cands[:max(0, self.cfg.unchoke_slots - 1)]
        opt = p.optimistic
        if opt is not None:
            d = self.peers.get(opt)
            if d is None or opt in regular or not p.owned & ~d.owned:
                opt = None
        p.recv_from = {}
        self._apply_unchokes(p, regular, opt)

    def _seed_rechoke(self):
        u = self.seed_peer
        cands = sorted(self.peers)
        k = self.cfg.seed_unchoke_slots
        chosen = cands if len(cands) <= k else self.rng.sample(cands, k)
        self._apply_unchokes(u, sorted(chosen), None)

    def _on_optimistic(self, pid, _b):
        p = self.peers.get(pid)
        if p is None:
            return
        heappush(self.heap, (self.t + self.cfg.optimistic_period,
                             _EV_OPTIMISTIC, pid, 0))
        if p.coalition is not None:
            return
        regular = [q for q in p.unchoked if q != p.optimistic]
        cands = [d.pid for d in self.peers.values()
                 if d.pid != pid and d.pid not in regular
                 and p.owned & ~d.owned]
        opt = cands[self.rng.randrange(len(cands))] if cands else None
        self._apply_unchokes(p, regular, opt)

    # ------------------------------------------------------------- dynamics

    def _member_rate(self, p):
        return p.rate_window.rate(self.t, since=p.arrival)

    def _on_decision(self, pid, _b):
        p = self.peers.get(pid)
        if p is None:
            return
        pol = self.cfg.membership.policy
        stride = pol.decision_stride * self.cfg.rechoke_interval
        heappush(self.heap, (self.t + stride, _EV_DECISION, pid, 0))
        own_rate = self._member_rate(p)
        rates = {}
        for cid in sorted(self.coalitions):
            members = [self.peers[m] for m in self.coalitions[cid].members
                       if m in self.peers]
            if members:
                rates[cid] = sum(self._member_rate(m)
                                 for m in members) / len(members)
        if not rates:
            return
        best_cid = max(sorted(rates), key=lambda c: rates[c])
        action = decide(
            is_member=p.coalition is not None,
            own_rate=own_rate,
            own_coalition_rate=rates.get(p.coalition),
            best_rate=rates[best_cid],
            in_best=p.coalition == best_cid,
            policy=pol)
        if action is Action.STAY:
            return
        if action is Action.LEAVE:
            self._apply_leave(p)
        elif action is Action.JOIN_MAX and p.coalition != best_cid:
            if p.coalition is not None:
                self._apply_leave(p)
            self._apply_join(p, best_cid)

    def _apply_leave(self, p):
        cid = p.coalition
        self._leave_coalition(p)
        # former fellow members stop serving an outsider immediately
        for upid in sorted(p.unchoked_by):
            u = self._peer(upid)
            if u is None or u.coalition != cid:
                continue
            tr = u.active.get(p.pid)
            if tr is not None:
                self._cancel(tr)
            if p.pid in u.unchoked:
                u.unchoked.remove(p.pid)
            if u.optimistic == p.pid:
                u.optimistic = None
            p.unchoked_by.discard(upid)

    def _apply_join(self, p, cid):
        self._join_coalition(p, cid)
        # members of other coalitions may not serve p any more
        for upid in sorted(p.unchoked_by):
            u = self._peer(upid)
            if u is None or u.coalition is None or u.coalition == cid:
                continue
            tr = u.active.get(p.pid)
            if tr is not None:
                self._cancel(tr)
            if p.pid in u.unchoked:
                u.unchoked.remove(p.pid)
            if u.optimistic == p.pid:
                u.optimistic = None
            p.unchoked_by.discard(upid)
        # p now chokes everyone outside its coalition
        members = self.coalitions[cid].members
        keep = [q for q in p.unchoked if q in members]
        self._apply_unchokes(p, keep, None)

    # ----------------------------------------------------------- measurement

    def _on_measure(self, _a, _b):
        nxt = self.t + self.cfg.measurement_interval
        if nxt <= self.cfg.duration + _EPS:
            heappush(self.heap, (nxt, _EV_MEASURE, 0, 0))
        counts = {}
        for p in self.peers.values():
            counts[p.owned_count] = counts.get(p.owned_count, 0) + 1
        self.occupancy.append((self.t, tuple(sorted(counts.items()))))
        for cid in sorted(self.coalitions):
            self.coalition_sizes.append(
                (self.t, cid, len(self.coalitions[cid].members)))


def run(config: SimConfig, seed: int) -> SimResult:
    """Run one simulation to completion and return its raw measurements."""
    return _Engine(config, seed).run()
