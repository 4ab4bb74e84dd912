"""PNG rendering for phase tables and runtime traces."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .tables import PhaseTable, read_bench

# floor for log-scale subspace distances; exact zeros plot at this level
SD_FLOOR = 1e-14
# fixed map, dark at 0 and light at 1, for cross-run comparability
_CMAP = "viridis"


def plot_phase(csv_path, out_path):
    """One success-fraction heatmap per algorithm; missing cells hatched."""
    table = PhaseTable.from_csv(csv_path)
    algos = table.algorithms
    s_vals, r_vals = table.s_values, table.r_values
    fig, axes = plt.subplots(
        1, len(algos), squeeze=False,
        figsize=(0.62 * len(s_vals) * len(algos) + 3.0, 0.55 * len(r_vals) + 1.8))
    for ax, algo in zip(axes[0], algos):
        grid = np.full((len(r_vals), len(s_vals)), np.nan)
        for (a, s, r) in table.cells:
            if a == algo:
                grid[r_vals.index(r), s_vals.index(s)] = float(table.fraction(a, s, r))
        im = ax.imshow(np.ma.masked_invalid(grid), origin="lower",
                       vmin=0.0, vmax=1.0, cmap=_CMAP, aspect="auto")
        for i in range(len(r_vals)):
            for j in range(len(s_vals)):
                if np.isnan(grid[i, j]):
                    ax.add_patch(Rectangle((j - 0.5, i - 0.5), 1.0, 1.0,
                                           hatch="///", fill=False,
                                           edgecolor="0.6", linewidth=0.5))
        ax.set_xticks(range(len(s_vals)), [str(v) for v in s_vals])
        ax.set_yticks(range(len(r_vals)), [str(v) for v in r_vals])
        ax.set_xlabel("block size s")
        ax.set_title(algo, fontsize=9)
    axes[0][0].set_ylabel("rank r")
    fig.colorbar(im, ax=list(axes[0]), label="success fraction", fraction=0.046)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_runtime(csv_path, out_path):
    """Per-algorithm subspace distance (log scale) vs cumulative seconds."""
    series = {}
    order = []
    for algo, _, t, sd in read_bench(csv_path):
        if algo not in series:
            series[algo] = ([], [])
            order.append(algo)
        series[algo][0].append(t)
        series[algo][1].append(max(sd, SD_FLOOR))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for algo in order:
        t, sd = series[algo]
        ax.semilogy(t, sd, marker=".", markersize=3, label=algo)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("subspace distance")
    ax.set_ylim(bottom=SD_FLOOR / 2)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
