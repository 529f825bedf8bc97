"""Figure rendering for reports: PNGs written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def plot_history(history: Sequence, path) -> Path:
    """Score per iteration plus the running best, from optimizer history."""
    path = Path(path)
    scores = [e.score for e in history]
    best = []
    cur = float("-inf")
    for s in scores:
        cur = max(cur, s)
        best.append(cur)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(range(len(scores)), scores, ".", alpha=0.4, label="evaluation")
    ax.plot(range(len(best)), best, "-", lw=1.5, label="running best")
    ax.set_xlabel("iteration")
    ax.set_ylabel("gap score")
    ax.set_ylim(-1.05, 1.05)
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_pls_benchmark(rows: Mapping[str, Mapping[int, tuple[float, float]]],
                       path) -> Path:
    """Selection quality vs budget, one line per algorithm.

    rows maps algorithm -> {budget: (mean_true_score, stderr)}; the oracle
    (budget-independent) renders as a horizontal reference line.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4))
    for alg, series in rows.items():
        budgets = sorted(series)
        means = [series[b][0] for b in budgets]
        errs = [series[b][1] for b in budgets]
        if alg == "oracle":
            ax.axhline(means[0], color="gray", ls="--", lw=1, label="oracle")
            continue
        ax.errorbar(budgets, means, yerr=errs, marker="o", capsize=3, label=alg)
    ax.set_xlabel("selection budget (evaluations)")
    ax.set_ylabel("mean true score of pick")
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
