"""Command-line harness: instance generation, single solves, phase grids, benches.

Four subcommands share one configuration pipeline (defaults < JSON config
file < command-line flags):

  gen    write a synthetic instance plus ground truth to a directory
  solve  run one algorithm on a stored instance; emit trace CSV + result JSON
  phase  Monte-Carlo success grid over (s, r) cells; emit one row per trial
  bench  run every requested algorithm on one common instance; emit the
         per-iteration (cum_time_s, sd) curves

Per-trial seeds are derived from the master seed with SeedSequence spawn
keys, so any subset of cells reproduces the same rows in any execution
order. PERMLRCS_THREADS controls phase parallelism (unset or 1 = serial,
0 = one worker per CPU); workers receive seeds, not arrays, and regenerate
their instance locally.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from numpy.random import SeedSequence

from .core_model import Dims, generate_synthetic
from .errors import InvalidDimsError, PermLrcsError
from .io import load_instance, save_instance
from .metrics import RECOVERY_SD_THRESHOLD, TrialRecord
from .solvers import (
    SolverConfig,
    run_lrcs_collapsed_baseline,
    run_perm_altgdmin,
    run_perm_altmin,
)

log = logging.getLogger("permlrcs")

ALGORITHMS = (
    "perm-altgdmin",
    "perm-altmin-exact",
    "perm-altmin-gd",
    "lrcs-cllps-altgdmin",
    "lrcs-cllps-altmin",
)

DEFAULTS = {
    "n": 100,
    "q": 200,
    "m": 60,
    "s": 5,
    "r": 2,
    "seed": 0,
    "trials": 10,
    "max_iters": 500,
    "stop_tol": 1e-10,
    "sd_threshold": RECOVERY_SD_THRESHOLD,
    "out": ".",
    "algorithms": ("perm-altgdmin",),
    "bench_algorithms": ALGORITHMS,
    "s_grid": (2, 5, 10, 15, 20),
    "r_grid": (1, 2, 3, 4, 5, 6, 7, 8),
    "solver": {},
}

_CONFIG_KEYS = frozenset(DEFAULTS)
_SOLVER_KEYS = frozenset(
    {"max_iters", "eta", "max_inner", "inner_tol", "stop_tol", "sd_threshold"}
)
# namespace tags for per-command seed derivation
_TAG_PHASE = 2
_TAG_BENCH = 3


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings for one harness invocation."""

    n: int
    q: int
    m: int
    s: int
    r: int
    seed: int
    trials: int
    max_iters: int
    stop_tol: float
    sd_threshold: float
    out: str
    algorithms: tuple
    bench_algorithms: tuple
    s_grid: tuple
    r_grid: tuple
    solver: dict

    def __post_init__(self):
        for name in ("n", "q", "m", "s", "r", "trials", "max_iters"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise InvalidDimsError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise InvalidDimsError(f"seed must be a nonnegative integer, got {self.seed!r}")
        for name in ("algorithms", "bench_algorithms"):
            algos = getattr(self, name)
            if not algos:
                raise InvalidDimsError(f"{name} must name at least one algorithm")
            for a in algos:
                if a not in ALGORITHMS:
                    raise InvalidDimsError(
                        f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}"
                    )
        for name in ("s_grid", "r_grid"):
            grid = getattr(self, name)
            if not grid or any(not isinstance(v, int) or v < 1 for v in grid):
                raise InvalidDimsError(f"{name} must be nonempty positive integers, got {grid!r}")
        for algo, over in self.solver.items():
            if algo not in ALGORITHMS:
                raise InvalidDimsError(f"solver override for unknown algorithm {algo!r}")
            extra = set(over) - _SOLVER_KEYS
            if extra:
                raise InvalidDimsError(
                    f"unknown solver option(s) for {algo}: {', '.join(sorted(extra))}"
                )

    def solver_config(self, algorithm: str) -> SolverConfig:
        kwargs = {
            "max_iters": self.max_iters,
            "stop_tol": self.stop_tol,
            "sd_threshold": self.sd_threshold,
        }
        kwargs.update(self.solver.get(algorithm, {}))
        if algorithm == "perm-altmin-exact":
            kwargs["u_mode"] = "direct"
        elif algorithm == "perm-altmin-gd":
            kwargs["u_mode"] = "gd"
        return SolverConfig(**kwargs)

    def dims(self) -> Dims:
        return Dims(n=self.n, q=self.q, m=self.m, r=self.r, s=self.s)


def _load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise PermLrcsError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise PermLrcsError(f"config file {path} must hold a JSON object")
    extra = set(raw) - _CONFIG_KEYS
    if extra:
        raise PermLrcsError(f"unknown config key(s) in {path}: {', '.join(sorted(extra))}")
    return raw


def build_config(ns: argparse.Namespace) -> ExperimentConfig:
    raw = dict(DEFAULTS)
    if getattr(ns, "config", None):
        raw.update(_load_config_file(ns.config))
    for flag in ("n", "q", "m", "s", "r", "seed", "trials", "max_iters", "stop_tol", "out"):
        v = getattr(ns, flag, None)
        if v is not None:
            raw[flag] = v
    if getattr(ns, "algo", None):
        raw["algorithms"] = tuple(ns.algo)
        raw["bench_algorithms"] = tuple(ns.algo)
    for key in ("algorithms", "bench_algorithms", "s_grid", "r_grid"):
        raw[key] = tuple(raw[key])
    return ExperimentConfig(**raw)


def run_algorithm(algorithm, instance, cfg: SolverConfig, truth=None):
    """Dispatch one of the five published algorithm names onto the solver API."""
    if algorithm == "perm-altgdmin":
        return run_perm_altgdmin(instance, cfg, truth=truth)
    if algorithm == "perm-altmin-exact":
        return run_perm_altmin(instance, dataclasses.replace(cfg, u_mode="direct"), truth=truth)
    if algorithm == "perm-altmin-gd":
        return run_perm_altmin(instance, dataclasses.replace(cfg, u_mode="gd"), truth=truth)
    if algorithm == "lrcs-cllps-altgdmin":
        return run_lrcs_collapsed_baseline(instance, cfg, truth=truth, variant="altgdmin")
    if algorithm == "lrcs-cllps-altmin":
        return run_lrcs_collapsed_baseline(instance, cfg, truth=truth, variant="altmin")
    raise InvalidDimsError(
        f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}"
    )


# ---------------------------------------------------------------------------
# CSV plumbing

def _fmt(x) -> str:
    """Shortest round-trip decimal for floats; fixed 6 decimals for clock fields
    is applied by callers."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _derive_seed(master, *key) -> int:
    return int(SeedSequence(entropy=master, spawn_key=key).generate_state(1)[0])


def _thread_count() -> int:
    raw = os.environ.get("PERMLRCS_THREADS", "1")
    try:
        v = int(raw)
    except ValueError as err:
        raise PermLrcsError(f"PERMLRCS_THREADS must be an integer, got {raw!r}") from err
    if v < 0:
        raise PermLrcsError(f"PERMLRCS_THREADS must be >= 0, got {v}")
    if v == 0:
        return os.cpu_count() or 1
    return v


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(ns) -> int:
    cfg = build_config(ns)
    dims = cfg.dims()
    instance, truth = generate_synthetic(dims, seed=cfg.seed)
    os.makedirs(cfg.out, exist_ok=True)
    manifest = save_instance(cfg.out, instance, truth,
                             seeds={"instance": cfg.seed, "perm": None})
    log.info("wrote instance n=%d q=%d m=%d s=%d r=%d seed=%d",
             dims.n, dims.q, dims.m, dims.s, dims.r, cfg.seed)
    print(manifest)
    return 0


def cmd_solve(ns) -> int:
    cfg = build_config(ns)
    algorithm = ns.algo_single
    if algorithm not in ALGORITHMS:
        raise PermLrcsError(
            f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}"
        )
    instance, truth, seeds = load_instance(ns.instance)
    res = run_algorithm(algorithm, instance, cfg.solver_config(algorithm), truth=truth)

    os.makedirs(cfg.out, exist_ok=True)
    trace_path = os.path.join(cfg.out, "trace.csv")
    rows = [
        (rec.iteration, _fmt(rec.objective), _fmt(rec.sd), f"{rec.cum_time_s:.6f}")
        for rec in res.trace
    ]
    _write_csv(trace_path, ("iter", "objective", "sd", "cum_time_s"), rows)

    d = instance.dims
    result = {
        "algorithm": algorithm,
        "final_sd": res.trace[-1].sd,
        "converged": res.converged,
        "iterations": res.iterations_run,
        "total_time_s": res.trace[-1].cum_time_s,
        "config": {
            "n": d.n, "q": d.q, "m": d.m, "s": d.s, "r": d.r,
            "max_iters": cfg.max_iters,
            "stop_tol": cfg.stop_tol,
            "sd_threshold": cfg.sd_threshold,
            "instance": os.path.abspath(ns.instance),
            "seeds": seeds,
        },
    }
    result_path = os.path.join(cfg.out, "result.json")
    with open(result_path, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("%s: converged=%s final_sd=%.3e iters=%d",
             algorithm, res.converged, result["final_sd"], res.iterations_run)
    print(result_path)
    return 0


def _feasible_cell(n, q, m, s, r):
    """Reason string if the (s, r) cell cannot be run at these dims, else None."""
    if m % s != 0:
        return f"s={s} does not divide m={m}"
    if m // s < r:
        return f"m/s={m // s} < r={r}"
    if r > min(n, q):
        return f"r={r} > min(n, q)={min(n, q)}"
    return None


def _phase_task(args):
    """Worker body: regenerate the cell instance from seeds and run one trial."""
    (algorithm, n, q, m, s, r, trial, iseed, pseed, cfg_kwargs) = args
    dims = Dims(n=n, q=q, m=m, r=r, s=s)
    instance, truth = generate_synthetic(dims, seed=iseed, perm_seed=pseed)
    res = run_algorithm(algorithm, instance, SolverConfig(**cfg_kwargs), truth=truth)
    return (algorithm, n, q, m, s, r, trial, pseed,
            res.trace[-1].sd, res.iterations_run, res.trace[-1].cum_time_s)


def cmd_phase(ns) -> int:
    cfg = build_config(ns)
    os.makedirs(cfg.out, exist_ok=True)

    tasks = []
    skipped = []
    for algorithm in cfg.algorithms:
        sc = cfg.solver_config(algorithm)
        cfg_kwargs = dataclasses.asdict(sc)
        for s in cfg.s_grid:
            for r in cfg.r_grid:
                reason = _feasible_cell(cfg.n, cfg.q, cfg.m, s, r)
                if reason is not None:
                    if algorithm == cfg.algorithms[0]:
                        skipped.append((s, r, reason))
                        log.warning("skipping cell s=%d r=%d: %s", s, r, reason)
                    continue
                iseed = _derive_seed(cfg.seed, _TAG_PHASE, s, r)
                for trial in range(cfg.trials):
                    pseed = _derive_seed(cfg.seed, _TAG_PHASE, s, r, trial)
                    tasks.append((algorithm, cfg.n, cfg.q, cfg.m, s, r, trial,
                                  iseed, pseed, cfg_kwargs))

    workers = _thread_count()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_phase_task, tasks, chunksize=4))
    else:
        outcomes = [_phase_task(t) for t in tasks]

    rows = []
    for (algorithm, n, q, m, s, r, trial, pseed, final_sd, iters, time_s) in outcomes:
        rec = TrialRecord.from_run(s=s, r=r, seed=pseed, algorithm=algorithm,
                                   final_sd=final_sd, iterations=iters,
                                   wall_time_s=time_s, threshold=cfg.sd_threshold)
        rows.append((rec.algorithm, n, q, m, rec.s, rec.r, trial, rec.seed,
                     _fmt(rec.final_sd), _fmt(rec.converged), rec.iterations,
                     f"{rec.wall_time_s:.6f}"))

    phase_path = _write_csv(
        os.path.join(cfg.out, "phase.csv"),
        ("algorithm", "n", "q", "m", "s", "r", "trial", "seed",
         "final_sd", "converged", "iters", "time_s"),
        rows,
    )
    if skipped:
        _write_csv(os.path.join(cfg.out, "phase_skipped.csv"),
                   ("s", "r", "reason"), skipped)
    log.info("phase grid: %d rows, %d skipped cells", len(rows), len(skipped))
    print(phase_path)
    return 0


def cmd_bench(ns) -> int:
    cfg = build_config(ns)
    os.makedirs(cfg.out, exist_ok=True)
    dims = cfg.dims()
    iseed = _derive_seed(cfg.seed, _TAG_BENCH)
    pseed = _derive_seed(cfg.seed, _TAG_BENCH, 0)
    instance, truth = generate_synthetic(dims, seed=iseed, perm_seed=pseed)

    rows = []
    for algorithm in cfg.bench_algorithms:
        res = run_algorithm(algorithm, instance, cfg.solver_config(algorithm), truth=truth)
        for rec in res.trace:
            rows.append((algorithm, rec.iteration, f"{rec.cum_time_s:.6f}", _fmt(rec.sd)))
        log.info("bench %s: final_sd=%.3e iters=%d time=%.3fs", algorithm,
                 res.trace[-1].sd, res.iterations_run, res.trace[-1].cum_time_s)

    bench_path = _write_csv(os.path.join(cfg.out, "bench.csv"),
                            ("algorithm", "iter", "cum_time_s", "sd"), rows)
    print(bench_path)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--n", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--stop-tol", dest="stop_tol", type=float)
    p.add_argument("--out", help="output directory")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="permlrcs",
        description="Low-rank column-wise sensing under block-local permutations: "
                    "data generation, solvers, phase grids, and runtime benches.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate and store a synthetic instance")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="run one algorithm on a stored instance")
    _add_common(p)
    p.add_argument("--instance", required=True, help="instance directory from gen")
    p.add_argument("--algo", dest="algo_single", required=True,
                   help=f"one of: {', '.join(ALGORITHMS)}")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("phase", help="Monte-Carlo success grid over (s, r) cells")
    _add_common(p)
    p.add_argument("--algo", action="append",
                   help="algorithm to run (repeatable; default perm-altgdmin)")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("bench", help="per-iteration error-vs-time curves on one instance")
    _add_common(p)
    p.add_argument("--algo", action="append",
                   help="algorithm to run (repeatable; default all)")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    parser = make_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (PermLrcsError, OSError) as err:
        log.error("%s", err)
        return 2


if __name__ == "__main__":
    sys.exit(main())
