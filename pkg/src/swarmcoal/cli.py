"""Command-line interface.

Subcommands (each reads a JSON scenario file and writes tables + a summary
into the output directory):

    model solve    steady-state solver vs. simulator validation
    model sweep    solver grid over (rechoke interval, unchoke slots)
    sim run        swarm simulation campaign comparing membership variants
    avail bench    piece-availability benchmark across peer capacities
    dyncoal run    dynamic coalition-membership runs

On failure the process exits nonzero and prints a machine-readable JSON
error report to stderr: {"error": <type>, "message": <text>}.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import SwarmcoalError
from .harness import ScenarioSpec, run_scenario

# (subcommand group, action) -> required scenario kind
_KIND_FOR = {
    ("model", "solve"): "model_validate",
    ("model", "sweep"): "sweep",
    ("sim", "run"): "swarm_impact",
    ("avail", "bench"): "availability",
    ("dyncoal", "run"): "dynamics",
}


def _parse_seeds(text: str | None):
    """Accept a single int or a comma-separated list of ints."""
    if text is None:
        return None
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--seed expects an int or comma-separated ints, got {text!r}")


def _add_common(sub):
    sub.add_argument("--config", required=True,
                     help="path to a JSON scenario file")
    sub.add_argument("--seed", type=_parse_seeds, default=None,
                     help="seed or comma-separated seed list "
                          "(overrides the scenario's seeds)")
    sub.add_argument("--out", required=True,
                     help="output directory for result tables and summary")
    sub.add_argument("--emit", choices=("json", "csv", "both"),
                     default="both", help="output format (default: both)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmcoal",
        description="Steady-state coalition model, swarm simulator, and "
                    "experiment harness.")
    top = parser.add_subparsers(dest="group", required=True)

    model = top.add_parser("model", help="steady-state solver commands")
    model_sub = model.add_subparsers(dest="action", required=True)
    _add_common(model_sub.add_parser(
        "solve", help="solve the model and validate against the simulator"))
    _add_common(model_sub.add_parser(
        "sweep", help="solver grid over rechoke interval and unchoke slots"))

    sim = top.add_parser("sim", help="swarm simulation commands")
    sim_sub = sim.add_subparsers(dest="action", required=True)
    _add_common(sim_sub.add_parser(
        "run", help="simulation campaign over membership variants"))

    avail = top.add_parser("avail", help="piece-availability commands")
    avail_sub = avail.add_subparsers(dest="action", required=True)
    _add_common(avail_sub.add_parser(
        "bench", help="availability benchmark across peer capacities"))

    dyncoal = top.add_parser("dyncoal", help="dynamic coalition commands")
    dyncoal_sub = dyncoal.add_subparsers(dest="action", required=True)
    _add_common(dyncoal_sub.add_parser(
        "run", help="dynamic membership simulation runs"))

    return parser


def _fail(kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    expected_kind = _KIND_FOR[(args.group, args.action)]
    try:
        spec = ScenarioSpec.from_file(args.config)
        if spec.kind != expected_kind:
            return _fail(
                "ScenarioError",
                f"{args.config}: scenario kind {spec.kind!r} does not match "
                f"subcommand (expected {expected_kind!r})")
        summary = run_scenario(spec, args.out, emit=args.emit,
                               seeds=args.seed)
    except SwarmcoalError as exc:
        return _fail(type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail("OSError", str(exc))
    print(json.dumps(summary, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
