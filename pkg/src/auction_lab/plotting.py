"""Figures written next to CLI reports (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}  # keep PNG bytes independent of the matplotlib version


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def bar_chart(path, labels, values, title, ylabel, highlight=()):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    colors = ["tab:orange" if lab in highlight else "tab:blue" for lab in labels]
    ax.bar([str(lab) for lab in labels], values, color=colors)
    ax.axhline(0.0, color="black", lw=0.6)
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    return _save(fig, path)


def histograms(path, series: dict, title, xlabel):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, values in series.items():
        ax.hist(np.asarray(values, dtype=float), bins=30, alpha=0.6, label=str(label))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    if series:
        ax.legend()
    return _save(fig, path)


def running_means(path, samples: dict, reference: dict, title):
    """Cumulative mean of each sample series against its closed-form value."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, values in samples.items():
        v = np.asarray(values, dtype=float)
        line = ax.plot(np.arange(1, v.size + 1), np.cumsum(v) / np.arange(1, v.size + 1), label=f"{label} MC")[0]
        if label in reference:
            ax.axhline(reference[label], ls="--", color=line.get_color(), label=f"{label} closed form")
    ax.set_xscale("log")
    ax.set_xlabel("trials")
    ax.set_ylabel("revenue")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def heatmap(path, matrix, row_labels, col_labels, title):
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    m = np.asarray(matrix, dtype=float)
    im = ax.imshow(m, cmap="viridis")
    ax.set_xticks(range(len(col_labels)), [str(c) for c in col_labels])
    ax.set_yticks(range(len(row_labels)), [str(r) for r in row_labels])
    for (i, j), v in np.ndenumerate(m):
        if np.isfinite(v):
            ax.text(j, i, f"{v:.3g}", ha="center", va="center", color="white", fontsize=8)
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    return _save(fig, path)
