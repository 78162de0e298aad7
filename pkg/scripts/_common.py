"""Shared helper for the experiment scripts: run a CLI subcommand against a
config shipped in scripts/configs, with an optional output-dir override."""

import os
import sys

from swarmcoal.cli import main

HERE = os.path.dirname(os.path.abspath(__file__))


def run(subcommand, config_name, default_out):
    cfg = os.path.join(HERE, "configs", config_name)
    argv = sys.argv[1:]
    out = default_out
    if argv and not argv[0].startswith("-"):
        out, argv = argv[0], argv[1:]
    return main(list(subcommand) + ["--config", cfg, "--out", out] + argv)
