"""Loading and aggregating harness CSV outputs.

This layer talks to the solver harness only through its documented CSV
schemas. Success counts are aggregated per (algorithm, s, r) cell and
fractions are formed with fractions.Fraction, so aggregation is exact.
"""

import csv
from fractions import Fraction

PHASE_COLUMNS = ("algorithm", "n", "q", "m", "s", "r", "trial", "seed",
                 "final_sd", "converged", "iters", "time_s")
BENCH_COLUMNS = ("algorithm", "iter", "cum_time_s", "sd")


class PlotsError(Exception):
    """Base error for the plotting layer."""


class SchemaError(PlotsError):
    """Input CSV does not match the documented harness schema."""


class NoDataError(PlotsError):
    """Input CSV has a valid header but no data rows."""


def _check_header(fieldnames, expected, path):
    actual = tuple(fieldnames or ())
    if actual == expected:
        return
    missing = [c for c in expected if c not in actual]
    extra = [c for c in actual if c not in expected]
    parts = []
    if missing:
        parts.append("missing columns: " + ", ".join(missing))
    if extra:
        parts.append("unexpected columns: " + ", ".join(extra))
    if not parts:
        parts.append("columns out of order: got " + ", ".join(actual))
    raise SchemaError(f"{path} does not match the harness schema ({'; '.join(parts)})")


def _read_rows(path, expected):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, expected, path)
        rows = list(reader)
    if not rows:
        raise NoDataError(f"no data rows in {path}")
    return rows


class PhaseTable:
    """Success counts per (algorithm, s, r) cell of a phase grid.

    cells maps (algorithm, s, r) to (successes, trials). Algorithms keep
    their first-seen CSV order so multi-panel figures match the run order.
    """

    def __init__(self, cells, algorithms=None):
        for key, (got, tot) in cells.items():
            if not 0 <= got <= tot:
                raise PlotsError(f"cell {key} has {got} successes of {tot} trials")
        self.cells = dict(cells)
        if algorithms is None:
            algorithms = sorted({a for (a, _, _) in self.cells})
        self._algorithms = list(algorithms)

    @classmethod
    def from_csv(cls, path):
        counts = {}
        order = []
        for row in _read_rows(path, PHASE_COLUMNS):
            try:
                s, r = int(row["s"]), int(row["r"])
            except (TypeError, ValueError) as err:
                raise SchemaError(f"{path}: non-integer s/r in row {row!r}") from err
            conv = row["converged"]
            if conv not in ("true", "false"):
                raise SchemaError(
                    f"{path}: converged must be 'true' or 'false', got {conv!r}")
            algo = row["algorithm"]
            if algo not in order:
                order.append(algo)
            got, tot = counts.get((algo, s, r), (0, 0))
            counts[(algo, s, r)] = (got + (conv == "true"), tot + 1)
        return cls(counts, algorithms=order)

    def fraction(self, algorithm, s, r) -> Fraction:
        got, tot = self.cells[(algorithm, s, r)]
        return Fraction(got, tot)

    @property
    def algorithms(self):
        return list(self._algorithms)

    @property
    def s_values(self):
        return sorted({s for (_, s, _) in self.cells})

    @property
    def r_values(self):
        return sorted({r for (_, _, r) in self.cells})


def read_bench(path):
    """Bench rows as (algorithm, iteration, cum_time_s, sd) tuples."""
    out = []
    for row in _read_rows(path, BENCH_COLUMNS):
        try:
            out.append((row["algorithm"], int(row["iter"]),
                        float(row["cum_time_s"]), float(row["sd"])))
        except (TypeError, ValueError) as err:
            raise SchemaError(f"{path}: malformed bench row {row!r}") from err
    return out
