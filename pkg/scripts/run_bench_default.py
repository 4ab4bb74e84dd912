#!/usr/bin/env python3
"""Run the default error-vs-time benchmark (all five algorithms on one
instance) and write bench.csv under results/bench.

Extra CLI flags are passed straight through, e.g.:
    python3 scripts/run_bench_default.py --seed 7 --max-iters 300
"""
import sys

from permlrcs.harness_cli import main

if __name__ == "__main__":
    sys.exit(main(["bench", "--out", "results/bench", *sys.argv[1:]]))
