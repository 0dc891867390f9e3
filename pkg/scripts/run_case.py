#!/usr/bin/env python3
"""Run a bundled case study end to end and report the bound check.

Usage: python scripts/run_case.py uav [--out results/uav] [--trials N]
"""

import sys

from layersynth.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if argv and not any(a.startswith("--out") for a in argv):
        argv = [argv[0], "--out", f"results/{argv[0]}"] + argv[1:]
    sys.exit(main(["case"] + argv))
