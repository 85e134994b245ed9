"""Figures for the ``report`` subcommand. Uses the non-interactive Agg backend."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .clustering import WeekDiagnostics  # noqa: E402

CASE_COLORS = {"Case1": "#2a9d8f", "Case2": "#e76f51", "Case3": "#8d99ae", "": "#c9ced6"}

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    # fixed metadata keeps PNG bytes stable across runs
    "svg.hashsalt": "newsbreadth",
}


def new_figure(width: float = 7.0, ratio: float | None = None):
    ratio = ratio or (math.sqrt(5) - 1) / 2
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, width * ratio))
    return fig, ax


def save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def ratio_case_figure(
    rows: Sequence[tuple[str, float, str]],
    title: str,
    path: Path,
    high: float = 0.5,
    low: float = 0.4,
) -> Path:
    """Bar per week (label, clustering ratio, case) colored by case, with the 0.5/0.4 guides."""
    fig, ax = new_figure()
    labels = [r[0] for r in rows]
    ratios = [r[1] for r in rows]
    colors = [CASE_COLORS.get(r[2], CASE_COLORS[""]) for r in rows]
    ax.bar(range(len(rows)), ratios, color=colors)
    ax.axhline(high, color="#264653", lw=0.8, ls="--")
    ax.axhline(low, color="#9b2226", lw=0.8, ls=":")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=60, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("share of news in high-cohesion clusters")
    ax.set_title(title, pad=22)
    handles = [plt.Rectangle((0, 0), 1, 1, color=CASE_COLORS[c]) for c in ("Case1", "Case2", "Case3")]
    labels = ["HG-NC right, HG wrong", "HG right, HG-NC wrong", "same outcome"]
    ax.legend(handles, labels, loc="lower center", bbox_to_anchor=(0.5, 1.0), ncol=3, frameon=False)
    return save(fig, path)


def cluster_stats_figure(rows: Sequence[WeekDiagnostics], title: str, path: Path) -> Path:
    """Weekly news count split into clustered (high-cohesion) and remaining articles."""
    fig, ax = new_figure()
    x = range(len(rows))
    clustered = [r.clustered_news for r in rows]
    rest = [r.news_count - r.clustered_news for r in rows]
    ax.bar(x, clustered, color="#2a9d8f", label="in high-cohesion clusters")
    ax.bar(x, rest, bottom=clustered, color="#c9ced6", label="other articles")
    ax.set_xticks(list(x))
    ax.set_xticklabels([r.start_date.strftime("%m/%d") for r in rows], rotation=60, ha="right")
    ax.set_ylabel("articles")
    ax.set_title(title)
    ax.legend(frameon=False)
    return save(fig, path)


def accuracy_figure(by_mode: dict[str, float], path: Path) -> Path:
    fig, ax = new_figure(4.5, 0.7)
    modes = list(by_mode)
    ax.bar(modes, [by_mode[m] for m in modes], color="#457b9d")
    for i, m in enumerate(modes):
        ax.text(i, by_mode[m] + 0.01, f"{by_mode[m]:.1%}", ha="center", va="bottom")
    ax.set_ylim(0, 1)
    ax.set_ylabel("binary accuracy")
    return save(fig, path)
