"""Experiment harness: capacity-distribution ingestion, scenario specs,
orchestration of model/simulator runs, summary statistics, and file outputs.

Scenario files are JSON documents with a fixed per-kind schema; unknown keys
are rejected up front so typos fail fast instead of silently using defaults.
All outputs are deterministic given (scenario, seed list).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass

from .coalition_dynamics import CoalitionPolicy, coefficient_of_variation
from .errors import ScenarioError
from .piece_strategy import availability_loss, track_empty_pd
from .prob_kernels import ModelParams
from .sim_engine import MembershipRule, SimConfig, run
from .steady_state import completion_time, solve, sweep

DEFAULT_PIECE_SIZE = 256 * 1024  # bytes
KILOBYTE = 1024.0

SCENARIO_KINDS = ("model_validate", "sweep", "swarm_impact", "availability",
                  "dynamics")


# --------------------------------------------------------------- capacities

@dataclass(frozen=True)
class CapacityDistribution:
    """Piecewise-linear inverse CDF of upload capacities.

    breakpoints: ((percentile, kbps), ...) with strictly increasing
    percentiles and nondecreasing values. value_at() returns pieces/second
    for the configured piece size; kbps_at() returns the raw value.
    """

    breakpoints: tuple
    piece_size: int = DEFAULT_PIECE_SIZE

    def __post_init__(self):
        if not self.breakpoints:
            raise ScenarioError("capacity distribution has no breakpoints")
        if self.piece_size <= 0:
            raise ScenarioError("piece_size must be > 0")
        prev_p, prev_v = None, None
        for p, v in self.breakpoints:
            if not 0.0 <= p <= 100.0:
                raise ScenarioError(f"percentile {p} outside [0, 100]")
            if v < 0:
                raise ScenarioError(f"capacity {v} KBps is negative")
            if prev_p is not None:
                if p <= prev_p:
                    raise ScenarioError(
                        f"percentiles must be strictly increasing: "
                        f"{prev_p} then {p}")
                if v < prev_v:
                    raise ScenarioError(
                        f"capacities must be nondecreasing: {prev_v} then {v}")
            prev_p, prev_v = p, v

    @classmethod
    def from_csv(cls, path, piece_size: int = DEFAULT_PIECE_SIZE):
        """Load breakpoints from a CSV file with header ``percentile,kbps``."""
        points = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != \
                    ["percentile", "kbps"]:
                raise ScenarioError(
                    f"{path}:1: expected header 'percentile,kbps', "
                    f"got {header!r}")
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 2:
                    raise ScenarioError(
                        f"{path}:{lineno}: expected 2 columns, got {len(row)}")
                try:
                    points.append((float(row[0]), float(row[1])))
                except ValueError as exc:
                    raise ScenarioError(
                        f"{path}:{lineno}: non-numeric value: {exc}") from exc
        if not points:
            raise ScenarioError(f"{path}: no data rows")
        try:
            return cls(tuple(points), piece_size)
        except ScenarioError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc

    def kbps_at(self, percentile: float) -> float:
        """Capacity in KBps at a percentile, linearly interpolated between
        breakpoints and clamped to the end values outside their range."""
        pts = self.breakpoints
        if percentile <= pts[0][0]:
            return pts[0][1]
        if percentile >= pts[-1][0]:
            return pts[-1][1]
        for (p0, v0), (p1, v1) in zip(pts, pts[1:]):
            if percentile <= p1:
                frac = (percentile - p0) / (p1 - p0)
                return v0 + frac * (v1 - v0)
        return pts[-1][1]  # unreachable

    def value_at(self, percentile: float) -> float:
        """Capacity in pieces/second (what the simulator consumes)."""
        return self.kbps_at(percentile) * KILOBYTE / self.piece_size

    def sample(self, rng) -> float:
        return self.value_at(rng.uniform(0.0, 100.0))


def default_capacity_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data",
                        "capacity_empirical.csv")


# ---------------------------------------------------------------- statistics

def percentile_linear(sorted_values, q: float) -> float:
    """q-th percentile with linear interpolation between order statistics."""
    if not sorted_values:
        raise ScenarioError("cannot take a percentile of an empty sample")
    if not 0 <= q <= 100:
        raise ScenarioError("percentile must be in [0, 100]")
    n = len(sorted_values)
    if n == 1:
        return float(sorted_values[0])
    pos = (n - 1) * q / 100.0
    lo = math.floor(pos)
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo])


def summarize(values) -> dict:
    """Boxplot statistics: mean, median, 25th/75th percentiles, count."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ScenarioError("cannot summarize an empty record set")
    return {
        "mean": sum(vals) / len(vals),
        "median": percentile_linear(vals, 50.0),
        "q25": percentile_linear(vals, 25.0),
        "q75": percentile_linear(vals, 75.0),
        "count": len(vals),
    }


# ------------------------------------------------------------ scenario specs

def _require(payload: dict, schema: dict, kind: str) -> dict:
    """Validate payload against {key: (required, caster)}; fail on unknowns."""
    unknown = set(payload) - set(schema)
    if unknown:
        raise ScenarioError(
            f"{kind}: unknown key(s): {', '.join(sorted(unknown))}")
    out = {}
    for key, (required, caster, default) in schema.items():
        if key in payload:
            try:
                out[key] = caster(payload[key])
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"{kind}: bad value for {key!r}: "
                                    f"{exc}") from exc
        elif required:
            raise ScenarioError(f"{kind}: missing required key {key!r}")
        else:
            out[key] = default
    return out


def _float_list(x):
    return [float(v) for v in x]


def _int_list(x):
    return [int(v) for v in x]


def _str_list(x):
    return [str(v) for v in x]


_SCHEMAS = {
    "model_validate": {
        "num_pieces": (True, int, None),
        "arrival_rate": (True, float, None),       # peers/second
        "upload_capacity": (True, float, None),    # pieces/second
        "seed_capacity": (False, float, None),     # defaults to peer capacity
        "rechoke_interval": (True, float, None),
        "k_values": (True, _int_list, None),
        "duration": (True, float, None),
        "steady_window": (True, _float_list, None),
        "seeds": (False, _int_list, None),
    },
    "sweep": {
        "num_pieces": (True, int, None),
        "arrival_rate": (True, float, None),
        "upload_capacity": (True, float, None),
        "rechoke_intervals": (True, _float_list, None),
        "k_values": (True, _int_list, None),
    },
    "swarm_impact": {
        "num_pieces": (True, int, None),
        "arrival_rate": (True, float, None),
        "capacity_file": (False, str, None),
        "piece_size": (False, int, DEFAULT_PIECE_SIZE),
        "seed_capacity": (True, float, None),
        "seed_rechoke": (False, float, None),
        "rechoke_interval": (True, float, None),
        "unchoke_slots": (True, int, None),
        "duration": (True, float, None),
        "steady_window": (True, _float_list, None),
        "variants": (True, list, None),
        "seeds": (False, _int_list, None),
    },
    "availability": {
        "num_peers": (True, int, None),
        "num_pieces": (True, int, None),
        "seed_capacity": (True, float, None),
        "seed_rechoke": (False, float, None),
        "rechoke_interval": (True, float, None),
        "unchoke_slots": (True, int, None),
        "optimistic_interval": (False, float, None),
        "initial_spread": (False, float, 20.0),
        "duration": (True, float, None),
        "capacities": (True, _float_list, None),
        "strategies": (True, _str_list, None),
        "seeds": (False, _int_list, None),
    },
    "dynamics": {
        "num_pieces": (True, int, None),
        "arrival_rate": (True, float, None),
        "capacity_file": (False, str, None),
        "piece_size": (False, int, DEFAULT_PIECE_SIZE),
        "upload_capacity": (False, float, None),
        "seed_capacity": (True, float, None),
        "seed_rechoke": (False, float, None),
        "rechoke_interval": (True, float, None),
        "unchoke_slots": (True, int, None),
        "duration": (True, float, None),
        "discount": (True, float, None),
        "decision_stride": (True, int, None),
        "join_prob": (True, float, None),
        "n_coalitions": (False, int, 1),
        "split_percentile": (False, float, 50.0),
        "seeds": (False, _int_list, None),
    },
}

_MEMBERSHIP_SCHEMA = {
    "name": (True, str, None),
    "kind": (True, str, None),
    "p_join": (False, float, 1.0),
    "q_low": (False, float, 50.0),
    "q_high": (False, float, 50.0),
    "strategy_coalition": (False, str, "rarest_coalition"),
    "strategy_outside": (False, str, "rarest_local"),
}


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    params: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario document must be a JSON object")
        kind = doc.get("kind")
        if kind not in SCENARIO_KINDS:
            raise ScenarioError(
                f"unknown scenario kind {kind!r}; expected one of "
                f"{', '.join(SCENARIO_KINDS)}")
        payload = {k: v for k, v in doc.items() if k != "kind"}
        params = _require(payload, _SCHEMAS[kind], kind)
        if kind == "swarm_impact":
            params["variants"] = [
                _require(v, _MEMBERSHIP_SCHEMA, f"{kind}.variants[{i}]")
                for i, v in enumerate(params["variants"])]
            if not params["variants"]:
                raise ScenarioError("swarm_impact: variants must be nonempty")
        if "steady_window" in params and params["steady_window"] is not None:
            win = params["steady_window"]
            if len(win) != 2:
                raise ScenarioError(f"{kind}: steady_window needs 2 numbers")
            params["steady_window"] = (win[0], win[1])
        return cls(kind, params)

    @classmethod
    def from_file(cls, path: str) -> "ScenarioSpec":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(doc)


# ------------------------------------------------------------------ outputs

class OutputWriter:
    """Writes CSV and/or JSON artifacts into an output directory."""

    def __init__(self, out_dir: str, emit: str = "both"):
        if emit not in ("json", "csv", "both"):
            raise ScenarioError(f"emit must be json, csv, or both: {emit!r}")
        self.out_dir = out_dir
        self.emit = emit
        os.makedirs(out_dir, exist_ok=True)

    def table(self, name: str, header, rows):
        rows = [list(r) for r in rows]
        if self.emit in ("csv", "both"):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            self._write(f"{name}.csv", buf.getvalue())
        if self.emit in ("json", "both"):
            payload = [dict(zip(header, r)) for r in rows]
            self._write(f"{name}.json", json.dumps(payload, indent=2,
                                                   sort_keys=True) + "\n")

    def summary(self, record: dict):
        text = json.dumps(record, indent=2, sort_keys=True) + "\n"
        self._write("summary.json", text)

    def _write(self, filename: str, text: str):
        with open(os.path.join(self.out_dir, filename), "w") as fh:
            fh.write(text)


# ------------------------------------------------------------- orchestration

def _seed_list(params, override, default_count=5):
    if override:
        return list(override)
    if params.get("seeds"):
        return list(params["seeds"])
    return list(range(default_count))


def run_scenario(spec: ScenarioSpec, out_dir: str, emit: str = "both",
                 seeds=None) -> dict:
    """Execute a scenario, write its artifacts, and return the summary."""
    writer = OutputWriter(out_dir, emit)
    runner = {
        "model_validate": _run_model_validate,
        "sweep": _run_sweep,
        "swarm_impact": _run_swarm_impact,
        "availability": _run_availability,
        "dynamics": _run_dynamics,
    }[spec.kind]
    summary = runner(spec.params, writer, seeds)
    summary["kind"] = spec.kind
    writer.summary(summary)
    return summary


def _model_params(p, k, dt) -> ModelParams:
    return ModelParams(arrival_rate=p["arrival_rate"],
                       upload_capacity=p["upload_capacity"],
                       num_pieces=p["num_pieces"],
                       rechoke_interval=dt, unchoke_slots=k)


def _run_model_validate(p, writer, seeds):
    seeds = _seed_list(p, seeds)
    seed_cap = p["seed_capacity"] if p["seed_capacity"] is not None \
        else p["upload_capacity"]
    rows = []
    for k in p["k_values"]:
        t0 = completion_time(solve(_model_params(p, k,
                                                 p["rechoke_interval"]))).t0
        sim_means = []
        for seed in seeds:
            cfg = SimConfig(
                num_pieces=p["num_pieces"], seed_capacity=seed_cap,
                rechoke_interval=p["rechoke_interval"], unchoke_slots=k,
                duration=p["duration"], arrival_rate=p["arrival_rate"],
                peer_capacity=p["upload_capacity"],
                steady_window=p["steady_window"],
                membership=MembershipRule(kind="all"),
                strategy_coalition="rarest_coalition")
            res = run(cfg, seed)
            times = res.steady_download_times()
            if not times:
                raise ScenarioError(
                    f"no steady-state completions for k={k}, seed={seed}")
            sim_means.append(sum(times) / len(times))
        sim_mean = sum(sim_means) / len(sim_means)
        rows.append([k, t0, sim_mean, (t0 - sim_mean) / sim_mean])
    writer.table("model_vs_sim", ["k", "model_t0", "sim_mean", "rel_error"],
                 rows)
    worst = max(abs(r[3]) for r in rows)
    return {"seeds": seeds, "k_values": p["k_values"],
            "max_abs_rel_error": worst,
            "rows": [{"k": r[0], "model_t0": r[1], "sim_mean": r[2],
                      "rel_error": r[3]} for r in rows]}


def _run_sweep(p, writer, seeds):
    base = _model_params(p, p["k_values"][0], p["rechoke_intervals"][0])
    result = sweep(base, p["rechoke_intervals"], p["k_values"])
    rows = [[dt, k, t0 if t0 is not None else float("nan")]
            for dt, k, t0 in result.grid]
    writer.table("sweep", ["rechoke_interval", "k", "model_t0"], rows)
    best_dt, best_k, best_t0 = result.best
    return {"best_rechoke_interval": best_dt, "best_k": best_k,
            "best_t0": best_t0,
            "failures": [[dt, k, str(reason)]
                         for dt, k, reason in result.failures]}


def _load_capacity(p) -> CapacityDistribution:
    path = p.get("capacity_file") or default_capacity_path()
    return CapacityDistribution.from_csv(path, p.get("piece_size")
                                         or DEFAULT_PIECE_SIZE)


def _write_completions(writer, name, results):
    rows = []
    for res in results:
        for c in res.completions:
            rows.append([res.seed, c.pid, c.arrival, c.completion,
                         c.coalition if c.coalition is not None else "",
                         c.capacity, c.download_time])
    writer.table(name, ["seed", "peer", "arrival", "completion", "coalition",
                        "capacity", "download_time"], rows)


def _run_swarm_impact(p, writer, seeds):
    seeds = _seed_list(p, seeds)
    dist = _load_capacity(p)
    variant_stats = {}
    for variant in p["variants"]:
        name = variant["name"]
        membership = MembershipRule(kind=variant["kind"],
                                    p_join=variant["p_join"],
                                    q_low=variant["q_low"],
                                    q_high=variant["q_high"])
        results = []
        per_seed_means = []
        all_times = []
        for seed in seeds:
            cfg = SimConfig(
                num_pieces=p["num_pieces"], seed_capacity=p["seed_capacity"],
                rechoke_interval=p["rechoke_interval"],
                unchoke_slots=p["unchoke_slots"], duration=p["duration"],
                arrival_rate=p["arrival_rate"], capacity_dist=dist,
                seed_rechoke=p["seed_rechoke"],
                steady_window=p["steady_window"], membership=membership,
                strategy_coalition=variant["strategy_coalition"],
                strategy_outside=variant["strategy_outside"])
            res = run(cfg, seed)
            times = res.steady_download_times()
            if not times:
                raise ScenarioError(
                    f"no steady-state completions for variant {name!r}, "
                    f"seed={seed}")
            per_seed_means.append(sum(times) / len(times))
            all_times.extend(times)
            results.append(res)
        _write_completions(writer, f"completions_{name}", results)
        stats = summarize(all_times)
        stats["per_seed_means"] = per_seed_means
        variant_stats[name] = stats
    writer.table("impact_summary",
                 ["variant", "mean", "median", "q25", "q75", "count"],
                 [[n, s["mean"], s["median"], s["q25"], s["q75"], s["count"]]
                  for n, s in variant_stats.items()])
    return {"seeds": seeds, "variants": variant_stats}


def _run_availability(p, writer, seeds):
    seeds = _seed_list(p, seeds, default_count=10)
    u_s = p["seed_capacity"]
    B = p["num_pieces"]
    t_star = B / u_s
    rows = []
    series_rows = []
    summary = []
    for strategy in p["strategies"]:
        for cap in p["capacities"]:
            lbars, epds = [], []
            for seed in seeds:
                cfg = SimConfig(
                    num_pieces=B, seed_capacity=u_s,
                    rechoke_interval=p["rechoke_interval"],
                    unchoke_slots=p["unchoke_slots"],
                    optimistic_interval=p["optimistic_interval"],
                    seed_rechoke=p["seed_rechoke"],
                    duration=p["duration"], arrival_rate=0.0,
                    peer_capacity=cap,
                    membership=MembershipRule(kind="all"),
                    strategy_coalition=strategy,
                    initial_peers=p["num_peers"],
                    initial_spread=p["initial_spread"],
                    track_availability=True)
                res = run(cfg, seed)
                if res.seed_start_time is None:
                    raise ScenarioError("the seed never uploaded anything")
                t0 = res.seed_start_time
                samples = [(t - t0, n) for t, n in res.availability]
                loss, lbar = availability_loss(samples, u_s, B, t_star)
                lbars.append(lbar)
                epd = track_empty_pd(res.empty_pd_samples)
                if epd is not None:
                    epds.append(epd)
                for t, l in loss:
                    n_c = min(math.floor(u_s * t + 1e-9), B)
                    series_rows.append(
                        [strategy, cap, seed, t, n_c,
                         round(n_c * (1.0 - l)), l])
            mean_l = sum(lbars) / len(lbars)
            mean_epd = sum(epds) / len(epds) if epds else None
            rows.append([strategy, cap, mean_l,
                         mean_epd if mean_epd is not None else ""])
            summary.append({"strategy": strategy, "capacity": cap,
                            "avg_loss": mean_l, "empty_pd": mean_epd})
    writer.table("availability", ["strategy", "capacity", "seed", "t", "n_c",
                                  "n_d", "loss"], series_rows)
    writer.table("availability_summary",
                 ["strategy", "capacity", "avg_loss", "empty_pd"], rows)
    return {"seeds": seeds, "points": summary}


def _run_dynamics(p, writer, seeds):
    seeds = _seed_list(p, seeds)
    policy = CoalitionPolicy(discount=p["discount"],
                             decision_stride=p["decision_stride"],
                             join_prob=p["join_prob"])
    membership = MembershipRule(kind="dynamic", policy=policy,
                                n_coalitions=p["n_coalitions"],
                                split_percentile=p["split_percentile"])
    dist = _load_capacity(p) if p["capacity_file"] else None
    size_rows = []
    fractions, covs = [], []
    for seed in seeds:
        cfg = SimConfig(
            num_pieces=p["num_pieces"], seed_capacity=p["seed_capacity"],
            rechoke_interval=p["rechoke_interval"],
            unchoke_slots=p["unchoke_slots"], duration=p["duration"],
            arrival_rate=p["arrival_rate"],
            peer_capacity=p["upload_capacity"], capacity_dist=dist,
            seed_rechoke=p["seed_rechoke"], membership=membership,
            strategy_coalition="rarest_coalition")
        res = run(cfg, seed)
        for t, cid, size in res.coalition_sizes:
            size_rows.append([seed, t, cid, size])
        fractions.append(membership_fraction(res))
        covs.append(final_quarter_cov(res))
    writer.table("coalition_size", ["seed", "t", "coalition", "size"],
                 size_rows)
    return {"seeds": seeds,
            "membership_fraction": sum(fractions) / len(fractions),
            "size_cov_final_quarter": covs,
            "max_size_cov": max(covs)}


def membership_fraction(res) -> float:
    """Mean fraction of alive peers inside any coalition over the final
    quarter of the run."""
    cutoff = 0.75 * res.config.duration
    totals = {}
    for t, occ in res.occupancy:
        if t >= cutoff:
            totals[t] = sum(c for _, c in occ)
    in_coal = {}
    for t, cid, size in res.coalition_sizes:
        if t >= cutoff:
            in_coal[t] = in_coal.get(t, 0) + size
    fracs = [in_coal.get(t, 0) / n for t, n in sorted(totals.items()) if n > 0]
    return sum(fracs) / len(fracs) if fracs else 0.0


def final_quarter_cov(res) -> float:
    """Coefficient of variation of the total coalition size over the final
    quarter of the run (stability metric)."""
    cutoff = 0.75 * res.config.duration
    by_time = {}
    for t, cid, size in res.coalition_sizes:
        if t >= cutoff:
            by_time[t] = by_time.get(t, 0) + size
    sizes = [by_time[t] for t in sorted(by_time)]
    return coefficient_of_variation(sizes)
