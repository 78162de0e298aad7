#!/usr/bin/env python3
"""Simulate dynamic coalition membership (periodic join/stay/leave decisions)
and report the coalition-size time series, the steady membership fraction,
and a final-quarter stability statistic.

Usage: run_dynamics.py [OUT_DIR] [--seed LIST] [--emit json|csv|both]
"""

import sys

from _common import run

if __name__ == "__main__":
    sys.exit(run(("dyncoal", "run"), "dynamics.json", "results/dynamics"))
