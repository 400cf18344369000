"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EvalReport  # noqa: E402

LOSS_COLUMNS = ("loss_hole", "loss_valid", "loss_adv", "loss_p", "loss_edge", "loss_d")


def _style(ax):
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    ax.grid(alpha=0.3, linewidth=0.5)


def plot_training_curves(metrics_csv, out_png, smooth: int = 10) -> Path:
    with open(metrics_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out_png = Path(out_png)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.8))
    if rows:
        it = np.array([int(r["iteration"]) for r in rows])
        for col in LOSS_COLUMNS:
            y = np.array([float(r[col]) for r in rows])
            if smooth > 1 and len(y) >= smooth:
                y = np.convolve(y, np.ones(smooth) / smooth, mode="valid")
                x = it[smooth - 1:]
            else:
                x = it
            ax1.plot(x, y, label=col.replace("loss_", ""), linewidth=1)
        ax1.set_yscale("log")
        ax2.plot(it, [float(r["hole_ratio"]) for r in rows], color="k", linewidth=0.8)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=7, frameon=False)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("hole ratio")
    for ax in (ax1, ax2):
        _style(ax)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png


def plot_eval_report(report: EvalReport, out_png) -> Path:
    means = report.bucket_means()
    out_png = Path(out_png)
    labels = list(means)
    fig, axes = plt.subplots(1, 4, figsize=(12, 3))
    for ax, key, title in zip(axes, ("psnr", "ssim", "l1", "l2"), ("PSNR (dB)", "SSIM", "L1 (%)", "L2 (%)")):
        vals = [means[b][key] for b in labels]
        vals = [v if np.isfinite(v) else 0.0 for v in vals]
        ax.bar(range(len(labels)), vals, color="0.4")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=45, fontsize=7)
        ax.set_title(title, fontsize=9)
        _style(ax)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png


def plot_completion(images: dict[str, np.ndarray], out_png) -> Path:
    """Side-by-side panels, e.g. input / coarse / refine / ground truth."""
    out_png = Path(out_png)
    fig, axes = plt.subplots(1, len(images), figsize=(2.2 * len(images), 2.4))
    for ax, (title, img) in zip(np.atleast_1d(axes), images.items()):
        img = np.clip(img, 0, 1)
        ax.imshow(img[..., 0] if img.shape[-1] == 1 else img, cmap="gray", vmin=0, vmax=1,
                  interpolation="nearest")
        ax.set_title(title, fontsize=8)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png
