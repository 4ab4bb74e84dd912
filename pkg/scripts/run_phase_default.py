#!/usr/bin/env python3
"""Run the default phase-transition grid and write CSVs under results/phase.

Extra CLI flags are passed straight through, e.g.:
    python3 scripts/run_phase_default.py --trials 20 --algo perm-altmin-exact
"""
import sys

from permlrcs.harness_cli import main

if __name__ == "__main__":
    sys.exit(main(["phase", "--out", "results/phase", *sys.argv[1:]]))
