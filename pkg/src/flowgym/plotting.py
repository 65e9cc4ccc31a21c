"""Reward-versus-budget figures from metrics rows.

One figure per reward id: x is the cumulative trajectory count, y is the
mean test reward (averaged over every run of a method at the same budget),
one series per method, with an optional dotted horizontal line marking the
demonstrator's mean test reward.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "flowgym"

import matplotlib.pyplot as plt
import numpy as np

from .checks import require

METHOD_ORDER = ("ilfm", "rwfm", "grpo")
METHOD_COLORS = {"ilfm": "#120789", "rwfm": "#C23D80", "grpo": "#FA9E3B"}


def method_series(rows, method: str):
    """(budgets, mean test rewards) over all rows of one method."""
    by_budget: dict[int, list[float]] = {}
    for row in rows:
        if row["method"] != method or row["test_reward"] is None:
            continue
        by_budget.setdefault(row["cumulative_trajectories"], []).append(
            row["test_reward"])
    budgets = sorted(by_budget)
    means = [float(np.mean(by_budget[b])) for b in budgets]
    return budgets, means


def make_reward_figure(rows, reward_id: str, baseline: float | None = None):
    """Build the figure for one reward id; caller saves or inspects it."""
    rows = [r for r in rows if r["reward"] == reward_id]
    require(len(rows) > 0, f"no metrics rows for reward {reward_id!r}")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    methods = [m for m in METHOD_ORDER
               if any(r["method"] == m for r in rows)]
    methods += sorted({r["method"] for r in rows} - set(METHOD_ORDER))
    plotted = 0
    for method in methods:
        budgets, means = method_series(rows, method)
        if not budgets:
            continue
        ax.plot(budgets, means, marker="o",
                color=METHOD_COLORS.get(method), label=method)
        plotted += 1
    require(plotted > 0, f"no test-reward rows for reward {reward_id!r}")
    if baseline is not None:
        ax.axhline(baseline, linestyle=":", color="0.4", label="demonstrator")
    ax.set_xlabel("cumulative training trajectories")
    ax.set_ylabel("mean test reward")
    ax.set_title(reward_id)
    ax.legend()
    fig.tight_layout()
    return fig


def save_reward_figure(fig, path: str) -> None:
    """SVG export with deterministic bytes (no embedded timestamps)."""
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
