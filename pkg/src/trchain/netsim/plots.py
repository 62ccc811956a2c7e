"""Figures for a simulation run (Agg backend, byte-stable PNGs)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sim import SimReport  # noqa: E402

# drop the Software tag so output does not depend on the matplotlib version
PNG_METADATA = {"Software": None}


def _epoch_lines(ax, report: SimReport) -> None:
    w = report.config.retarget_window
    for h in range(w + 1, report.config.blocks + 1, w):
        ax.axvline(h, color="0.85", lw=0.6, zorder=0)


def plot_intervals(report: SimReport, path) -> None:
    rows = [r for r in report.rows if r.interval is not None]
    fig, ax = plt.subplots(figsize=(8, 3.5))
    _epoch_lines(ax, report)
    ax.plot([r.height for r in rows], [r.interval for r in rows], ".", ms=3, color="tab:blue",
            label="interval")
    w = report.config.retarget_window
    means = []
    for start in range(1, report.config.blocks + 1, w):
        vals = [r.interval for r in rows if start <= r.height < start + w]
        if vals:
            means.append((start + w / 2, sum(vals) / len(vals)))
    if means:
        ax.plot(*zip(*means), "-", color="tab:orange", lw=1.5, label="epoch mean")
    bt = report.config.block_time
    ax.axhline(bt, color="k", lw=1, ls="--", label="target")
    ax.axhspan(bt / 2, bt * 2, color="tab:green", alpha=0.08)
    if report.config.hashrate_step:
        ax.axvline(report.config.hashrate_step.height, color="tab:red", lw=1, ls=":",
                   label="hash-rate step")
    ax.set_yscale("log")
    ax.set_xlabel("height")
    ax.set_ylabel("interval (s)")
    ax.legend(loc="upper right", fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def plot_bits(report: SimReport, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 2.8))
    ax.step([r.height for r in report.rows], [r.bits for r in report.rows], where="post",
            color="tab:purple")
    forks = [r for r in report.rows if r.forks_at_height]
    if forks:
        ax.plot([r.height for r in forks], [r.bits for r in forks], "x", color="tab:red",
                ms=4, label="stale block at height")
        ax.legend(loc="lower right", fontsize=7, frameon=False)
    ax.set_xlabel("height")
    ax.set_ylabel("key bits")
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata=PNG_METADATA)
    plt.close(fig)
