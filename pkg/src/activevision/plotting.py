"""Figures rendered next to the CSV outputs."""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import read_csv_columns  # noqa: E402


def _floats(col):
    return [float(v) if v != "" else math.nan for v in col]


def plot_training(epochs_csv, out_png, metrics_csv=None):
    """Per-epoch success rate, success duration and ball-loss duration, plus the loss trace."""
    cols = read_csv_columns(epochs_csv)
    if not cols:
        raise ValueError(f"{epochs_csv}: no epochs to plot")
    epoch = [int(e) for e in cols["epoch"]]
    panels = [("mean_success_rate", "success rate", (0, 1.02)),
              ("mean_success_duration", "success duration (steps)", (0, 21)),
              ("mean_ball_loss_duration", "ball-loss duration (steps)", (0, 21))]
    n = len(panels) + (metrics_csv is not None)
    fig, axes = plt.subplots(n, 1, figsize=(7, 2.4 * n), sharex=False)
    for ax, (key, label, ylim) in zip(axes, panels):
        ax.plot(epoch, _floats(cols[key]), lw=1.2)
        ax.set_ylabel(label)
        ax.set_ylim(*ylim)
        ax.grid(alpha=0.3)
    axes[len(panels) - 1].set_xlabel("epoch (300 steps)")
    if metrics_csv is not None:
        m = read_csv_columns(metrics_csv)
        ax = axes[-1]
        if m:
            ax.plot([int(s) for s in m["step"]], _floats(m["loss"]), lw=0.6, color="tab:gray")
        ax.set_ylabel("episode mean loss")
        ax.set_xlabel("environment step")
        ax.set_yscale("log")
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)
    return Path(out_png)


def plot_robustness(curve_json, out_png):
    """Mean success rate against localisation error, one line per method, with 2-stderr bars."""
    data = json.loads(Path(curve_json).read_text())
    levels = data["error_levels"]
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, series in data["methods"].items():
        ax.errorbar(levels, series["mean_success_rate"], yerr=[2 * s for s in series["stderr"]],
                    marker="o", capsize=3, label=method)
    ax.set_xlabel("localisation error sigma (m and rad)")
    ax.set_ylabel("average success rate")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)
    return Path(out_png)


def plot_directory(out_dir):
    """Render every figure whose inputs exist in ``out_dir``; returns the written paths."""
    out_dir = Path(out_dir)
    written = []
    if (out_dir / "epochs.csv").is_file():
        metrics = out_dir / "metrics.csv"
        written.append(plot_training(out_dir / "epochs.csv", out_dir / "training.png",
                                     metrics if metrics.is_file() else None))
    if (out_dir / "robustness.json").is_file():
        written.append(plot_robustness(out_dir / "robustness.json", out_dir / "robustness.png"))
    return written
