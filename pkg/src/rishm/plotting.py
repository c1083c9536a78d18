"""Figures for benchmark reports, written with the Agg backend."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "lines.linewidth": 1.4,
}

# pin metadata so identical inputs give identical bytes
_META = {"Software": None}


def _step_curve(trace, grid):
    fe = np.array([t[0] for t in trace])
    best = np.array([t[1] for t in trace])
    idx = np.searchsorted(fe, grid, side="right") - 1
    out = np.full(len(grid), np.nan)
    ok = idx >= 0
    out[ok] = best[idx[ok]]
    return out


def convergence_figure(results: Sequence[dict], path, title: str | None = None) -> Path:
    """Mean best-so-far fitness against FEs per variant, with min/max band over seeds."""
    by_variant = defaultdict(list)
    for r in results:
        by_variant[r["variant"]].append(r)
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.6))
        for variant in sorted(by_variant):
            runs = sorted(by_variant[variant], key=lambda r: r["seed"])
            last = max(r["trace"][-1][0] for r in runs)
            grid = np.arange(1, last + 1)
            curves = np.vstack([_step_curve(r["trace"], grid) for r in runs])
            mean = np.nanmean(curves, axis=0)
            ax.plot(grid, mean, label=f"{variant} (R={len(runs)})")
            if len(runs) > 1:
                ax.fill_between(grid, np.nanmin(curves, axis=0), np.nanmax(curves, axis=0), alpha=0.15, linewidth=0)
        ax.set_xlabel("fitness evaluations")
        ax.set_ylabel("best blind-spot mass")
        ax.set_title(title or "convergence")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return path


def final_fitness_figure(results: Sequence[dict], path, title: str | None = None) -> Path:
    """Final best fitness per variant, one marker per seed."""
    by_variant = defaultdict(list)
    for r in results:
        by_variant[r["variant"]].append(r["best"]["fitness"])
    names = sorted(by_variant)
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        for i, name in enumerate(names):
            vals = np.sort(by_variant[name])
            ax.plot(np.full(len(vals), i), vals, "o", alpha=0.7)
            ax.plot([i - 0.25, i + 0.25], [vals.mean()] * 2, color="k", linewidth=1)
        ax.set_xticks(range(len(names)), names, rotation=15)
        ax.set_ylabel("final best fitness")
        ax.set_title(title or "final fitness by variant")
        fig.tight_layout()
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return path
