"""Optional figure rendering for CLI reports (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "savefig.bbox": "tight",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def trajectory_figure(traj, path: str | Path) -> Path:
    """Shifts and payoff gap per iteration; shaded bands mark period-1 iterations."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
        h = np.arange(len(traj.iterates))
        for k, aid in enumerate(traj.ids):
            ax1.plot(h, traj.iterates[:, k], lw=1, label=f"x_{aid}")
        p1 = traj.active_period == 1
        ax1.fill_between(h, 0, 1, where=p1, transform=ax1.get_xaxis_transform(),
                         color="0.85", step="mid", label="period 1 active")
        ax1.set_ylabel("shift")
        ax1.legend(fontsize=7, ncol=2)
        ax2.semilogy(h, np.maximum(traj.payoff_gap, 1e-16), color="k", lw=1)
        ax2.set_ylabel("payoff gap")
        ax2.set_xlabel("iteration")
        return _save(fig, Path(path))


def sweep_figure(rows: list[dict], path: str | Path) -> Path:
    """Box plot of efficiency loss against agent count."""
    ns = sorted({r["n"] for r in rows})
    data = [[r["efficiency_loss"] for r in rows if r["n"] == n and r["game_type"] != "rejected"]
            for n in ns]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(9, 4))
        ax.boxplot(data, positions=ns, widths=0.6, flierprops={"markersize": 2})
        ax.set_xticks(ns[::4])
        ax.set_xticklabels([str(n) for n in ns[::4]])
        ax.set_xlabel("number of agents")
        ax.set_ylabel("efficiency loss")
        return _save(fig, Path(path))


def realworld_figures(rows: list[dict], samples: list[dict], out_dir: str | Path) -> list[Path]:
    """Efficiency-loss box plot per level and a before/after charge scatter."""
    out_dir = Path(out_dir)
    levels = sorted({s["level"] for s in samples})
    data = [[s["efficiency_loss"] for s in samples if s["level"] == lv and s["converged"]]
            for lv in levels]
    paths = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.boxplot(data, positions=range(len(levels)))
        ax.set_xticks(range(len(levels)))
        ax.set_xticklabels([f"{lv:.0%}" for lv in levels])
        ax.axhline(1.05, ls="--", color="0.5", lw=0.8)
        ax.set_xlabel("non-CP demand variation")
        ax.set_ylabel("efficiency loss")
        paths.append(_save(fig, out_dir / "realworld_efficiency_loss.png"))

        first = [r for r in rows if r["sample"] == 0 and r["level"] == levels[-1]]
        before = np.array([r["charge_before"] for r in first])
        after = np.array([r["charge_after"] for r in first])
        fig, ax = plt.subplots(figsize=(4.5, 4))
        ax.loglog(before, np.maximum(after, 1e-9), ".", ms=4)
        lim = [before[before > 0].min(), before.max()]
        ax.plot(lim, lim, color="0.5", lw=0.8)
        ax.set_xlabel("CP charge before")
        ax.set_ylabel("CP charge after")
        paths.append(_save(fig, out_dir / "realworld_charges.png"))
    return paths
