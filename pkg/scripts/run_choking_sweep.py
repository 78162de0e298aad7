#!/usr/bin/env python3
"""Sweep the model over re-choke intervals {10, 20, 30} s and unchoke slot
counts k in {1..10, 30}; report the grid and the optimum.

Usage: run_choking_sweep.py [OUT_DIR] [--emit json|csv|both]
"""

import sys

from _common import run

if __name__ == "__main__":
    sys.exit(run(("model", "sweep"), "choking_sweep.json",
                 "results/choking_sweep"))
