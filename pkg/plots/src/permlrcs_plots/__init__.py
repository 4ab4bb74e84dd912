"""Figures from permlrcs harness CSVs.

Consumes only the documented CSV schemas (phase.csv, bench.csv) and renders
phase-grid success heatmaps and error-vs-time curves as PNG files.
"""

from .render import SD_FLOOR, plot_phase, plot_runtime
from .tables import (
    BENCH_COLUMNS,
    PHASE_COLUMNS,
    NoDataError,
    PhaseTable,
    PlotsError,
    SchemaError,
    read_bench,
)

__version__ = "0.1.0"

__all__ = [
    "BENCH_COLUMNS",
    "NoDataError",
    "PHASE_COLUMNS",
    "PhaseTable",
    "PlotsError",
    "SD_FLOOR",
    "SchemaError",
    "plot_phase",
    "plot_runtime",
    "read_bench",
]
