"""Report figures written next to the delimited report files."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "narrlens",
}

# PNG metadata would otherwise embed the matplotlib version string.
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_run_comparison(header: Sequence[str], rows: Sequence[Sequence], path) -> Path:
    """Grouped bars: one group per metric row, one bar per run."""
    runs = list(header[1:])
    metrics = [r[0] for r in rows]
    values = np.array([[np.nan if v is None else v for v in r[1:]] for r in rows], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.2))
        width = 0.8 / max(1, len(runs))
        x = np.arange(len(metrics))
        for k, run in enumerate(runs):
            ax.bar(x + (k - (len(runs) - 1) / 2) * width, np.nan_to_num(values[:, k]), width, label=run)
        ax.set_xticks(x)
        ax.set_xticklabels(metrics, rotation=25, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("F1")
        ax.set_title("Classification F1")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_generation(report: Mapping[str, object], path) -> Path:
    langs = list(report)
    p = [report[k].precision for k in langs]
    r = [report[k].recall for k in langs]
    f = [report[k].f1 for k in langs]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        x = np.arange(len(langs))
        for k, (vals, name) in enumerate(((p, "precision"), (r, "recall"), (f, "F1"))):
            ax.bar(x + (k - 1) * 0.27, vals, 0.27, label=name)
        ax.set_xticks(x)
        ax.set_xticklabels(langs)
        ax.set_ylim(min(0.0, min(f + p + r)), 1.05)
        ax.set_title("Explanation greedy-match score")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_loss_curves(curves: Mapping[str, Sequence[float]], path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        for name, curve in curves.items():
            ax.plot(np.arange(1, len(curve) + 1), curve, marker="o", ms=3, label=name)
        ax.set_xlabel("epoch")
        ax.set_ylabel("focal loss")
        ax.legend(frameon=False)
        return _save(fig, path)
