#!/usr/bin/env python3
"""Simulate a heterogeneous swarm under four membership variants (no
coalition, everyone joins, 90% join, below-90th-percentile join) and compare
completion-time statistics.

Usage: run_swarm_impact.py [OUT_DIR] [--seed LIST] [--emit json|csv|both]
"""

import sys

from _common import run

if __name__ == "__main__":
    sys.exit(run(("sim", "run"), "swarm_impact.json",
                 "results/swarm_impact"))
