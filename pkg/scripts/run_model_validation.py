#!/usr/bin/env python3
"""Solve the steady-state model for k in 1..10 and compare the predicted
completion time against simulated steady-state means (5 seeds).

Usage: run_model_validation.py [OUT_DIR] [--seed LIST] [--emit json|csv|both]
"""

import sys

from _common import run

if __name__ == "__main__":
    sys.exit(run(("model", "solve"), "model_validation.json",
                 "results/model_validation"))
