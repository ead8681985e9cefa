"""Figure rendering for experiment reports.

Kept separate from the experiment runners so the core stays free of graphics
dependencies at run time; the CLI calls these after the CSVs are written.
"""

from __future__ import annotations

import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

_ARM_COLORS = {"mrw": "tab:red", "mala": "tab:blue", "pmala": "tab:green"}


def _color(name: str):
    return _ARM_COLORS.get(name, "tab:gray")


def render_rhat_figure(named_reports: Sequence[tuple], out_path: str,
                       threshold: float = 1.01) -> None:
    """Shrink-factor trajectories, one row per coordinate, point and upper
    panels side by side, one curve per sampler."""
    if not named_reports:
        raise ValueError("no reports to plot")
    d = named_reports[0][1].rhat_point.shape[1]
    fig, axes = plt.subplots(d, 2, figsize=(9, 2.0 * d + 1), squeeze=False,
                             sharex=True)
    for j in range(d):
        for col, attr, label in ((0, "rhat_point", "point"),
                                 (1, "rhat_upper", "97.5% upper")):
            ax = axes[j][col]
            for name, report in named_reports:
                values = getattr(report, attr)[:, j]
                finite = np.isfinite(values)
                ax.plot(report.prefixes[finite], np.minimum(values[finite], 3.0),
                        label=name, color=_color(name), lw=1.2)
            ax.axhline(threshold, color="black", ls="--", lw=0.8)
            ax.set_ylim(0.98, 2.0)
            ax.set_ylabel(f"coord {j + 1}\n{label}", fontsize=8)
            if j == d - 1:
                ax.set_xlabel("iterations")
    axes[0][0].legend(fontsize=8, loc="upper right")
    fig.suptitle("Gelman-Rubin shrink factor by coordinate")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def render_ess_figure(named_reports: Sequence[tuple], out_path: str) -> None:
    """Grouped bars: ESS at the report prefix, per coordinate, per sampler."""
    if not named_reports:
        raise ValueError("no reports to plot")
    d = named_reports[0][1].ess.shape[0]
    width = 0.8 / len(named_reports)
    fig, ax = plt.subplots(figsize=(1.6 * d + 3, 4))
    coords = np.arange(d)
    for i, (name, report) in enumerate(named_reports):
        offset = (i - (len(named_reports) - 1) / 2) * width
        ax.bar(coords + offset, report.ess, width, label=name, color=_color(name))
    ax.set_xticks(coords)
    ax.set_xticklabels([str(j + 1) for j in coords])
    ax.set_xlabel("coordinate")
    prefix = named_reports[0][1].ess_prefix
    ax.set_ylabel(f"ESS at {prefix} iterations")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def render_scaling_figure(rows: Sequence, out_path: str) -> None:
    """Acceptance rate against dimension for each step-size arm."""
    if not rows:
        raise ValueError("no rows to plot")
    arms = []
    for r in rows:
        if r.arm not in arms:
            arms.append(r.arm)
    fig, ax = plt.subplots(figsize=(6, 4))
    for arm in arms:
        sub = [r for r in rows if r.arm == arm]
        ax.plot([r.d for r in sub], [r.acceptance for r in sub],
                marker="o", label=arm)
    ax.axhline(0.10, color="black", ls="--", lw=0.8)
    ax.axhline(0.01, color="black", ls=":", lw=0.8)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("dimension")
    ax.set_ylabel("mean acceptance rate")
    ax.set_ylim(-0.02, 1.0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def render_quantile_figures(result, out_dir: str) -> list[str]:
    """Both quantile-experiment figures; returns the written paths."""
    named = [(name, result.arms[name].report) for name in result.config.samplers]
    rhat_path = os.path.join(out_dir, "rhat.png")
    ess_path = os.path.join(out_dir, "ess.png")
    render_rhat_figure(named, rhat_path, threshold=result.config.rhat_threshold)
    render_ess_figure(named, ess_path)
    return [rhat_path, ess_path]


def render_trace_figure(samples: np.ndarray, out_path: str,
                        title: Optional[str] = None) -> None:
    """Coordinate trace plot for a single chain."""
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[:, None]
    d = samples.shape[1]
    fig, axes = plt.subplots(d, 1, figsize=(8, 1.6 * d + 1), squeeze=False,
                             sharex=True)
    for j in range(d):
        axes[j][0].plot(samples[:, j], lw=0.6)
        axes[j][0].set_ylabel(f"coord {j + 1}", fontsize=8)
    axes[-1][0].set_xlabel("iteration")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
