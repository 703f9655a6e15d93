"""Delimited outputs and rendered figures for runs, sweeps, and benchmarks.

Every reporting path writes machine-readable CSV/JSON next to a PNG figure
rendered with the non-interactive matplotlib backend, so headless runs
produce the same artifacts as interactive ones.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .train import MetricsReport  # noqa: E402

METRICS_FIELDS = ["epoch", "l_c", "l_d", "l_total", "test_accuracy",
                  "test_kappa", "seconds"]


def write_metrics_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        writer.writeheader()
        for r in report.epochs:
            writer.writerow({k: getattr(r, k) for k in METRICS_FIELDS})


def write_summary_json(report: MetricsReport, path, extra: dict | None = None) -> None:
    payload = report.summary()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def write_rows_csv(rows: list[dict], path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def plot_training_curves(report: MetricsReport, path) -> None:
    """Loss components and fused test accuracy per epoch."""
    epochs = [r.epoch for r in report.epochs]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [r.l_total for r in report.epochs], label="total loss")
    ax.plot(epochs, [r.l_c for r in report.epochs], label="classification")
    ax.plot(epochs, [r.l_d for r in report.epochs], label="contrastive")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    seen = [(r.epoch, r.test_accuracy) for r in report.epochs
            if r.test_accuracy is not None]
    if seen:
        ax2 = ax.twinx()
        ax2.plot(*zip(*seen), color="tab:red", linestyle="--",
                 label="fused test accuracy")
        ax2.set_ylabel("accuracy")
        ax2.set_ylim(0.0, 1.05)
        lines, labels = ax.get_legend_handles_labels()
        lines2, labels2 = ax2.get_legend_handles_labels()
        ax.legend(lines + lines2, labels + labels2, loc="center right", fontsize=8)
    else:
        ax.legend(fontsize=8)
    ax.set_title(f"training run ({report.status})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep_heatmap(rows: list[dict], path) -> None:
    """Accuracy grid over (heads, blocks) cells."""
    heads = sorted({r["heads"] for r in rows})
    blocks = sorted({r["blocks"] for r in rows})
    grid = np.full((len(heads), len(blocks)), np.nan)
    for r in rows:
        grid[heads.index(r["heads"]), blocks.index(r["blocks"])] = r["accuracy"]
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(grid, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(blocks)), [str(b) for b in blocks])
    ax.set_yticks(range(len(heads)), [str(h) for h in heads])
    ax.set_xlabel("attention blocks")
    ax.set_ylabel("heads")
    for i in range(len(heads)):
        for j in range(len(blocks)):
            if not np.isnan(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.2f}", ha="center", va="center",
                        color="white", fontsize=9)
    fig.colorbar(im, ax=ax, label="fused test accuracy")
    ax.set_title("hyperparameter sweep")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_bench(flops: dict, scaling: dict, timings: list[dict], path) -> None:
    """Left: analytic FLOPs; middle: measured L vs 2L; right: inference time."""
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6))

    ax = axes[0]
    ax.bar(["dense", "windowed"], [flops["dense"], flops["windowed"]],
           color=["tab:gray", "tab:blue"])
    ax.set_ylabel("attention FLOPs")
    ax.set_title(f"analytic cost (L={flops['seq_len']})")

    ax = axes[1]
    l1 = scaling["seq_len"]
    labels = [f"L={l1}", f"L={2 * l1}"]
    xs = np.arange(2)
    ax.bar(xs - 0.2, scaling["windowed_s"], width=0.4, label="windowed")
    ax.bar(xs + 0.2, scaling["dense_s"], width=0.4, label="dense")
    ax.set_xticks(xs, labels)
    ax.set_ylabel("seconds / forward")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("measured scaling")

    ax = axes[2]
    ax.bar([str(t["batch"]) for t in timings], [t["mean_ms"] for t in timings],
           color="tab:green")
    ax.set_xlabel("batch size")
    ax.set_ylabel("mean ms / forward")
    ax.set_title("inference benchmark")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
