"""Image quality measures: PSNR, single-scale SSIM, L1 and L2 percentages."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

BUCKETS = ("0.1-0.2", "0.2-0.3", "0.3-0.4", "0.4-0.5", "0.5-0.6")


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def l1_percent(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b))) * 100.0


def l2_percent(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2)) * 100.0


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _to_gray(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=-1) if x.ndim == 3 else x


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(x, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim_map(a, b, window: int = 11, sigma: float = 1.5, peak: float = 1.0) -> np.ndarray:
    a, b = _pair(a, b)
    a, b = _to_gray(a), _to_gray(b)
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} smaller than the {window}x{window} SSIM window")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    g = gaussian_window(window, sigma)
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, window: int = 11, sigma: float = 1.5, peak: float = 1.0) -> float:
    """Mean local SSIM on the channel-mean grayscale image (valid windows only)."""
    a, b = _pair(a, b)
    if np.array_equal(a, b):
        return 1.0
    return float(np.mean(ssim_map(a, b, window, sigma, peak)))


def bucket_label(ratio: float) -> str:
    for label in BUCKETS:
        lo, hi = (float(v) for v in label.split("-"))
        if lo <= ratio <= hi:
            return label
    return "other"


@dataclass
class EvalRow:
    id: str
    hole_ratio: float
    psnr: float
    ssim: float
    l1: float
    l2: float

    @property
    def bucket(self) -> str:
        return bucket_label(self.hole_ratio)


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def add(self, image_id: str, pred, gt, mask) -> EvalRow:
        ratio = float(np.mean(np.asarray(mask) > 0.5))
        row = EvalRow(image_id, ratio, psnr(pred, gt), ssim(pred, gt), l1_percent(pred, gt), l2_percent(pred, gt))
        self.rows.append(row)
        return row

    def bucket_means(self) -> dict[str, dict[str, float]]:
        out = {}
        rows = sorted(self.rows, key=lambda r: r.id)
        for label in BUCKETS + ("other",):
            sel = [r for r in rows if r.bucket == label]
            if not sel:
                continue
            out[label] = {
                "count": len(sel),
                "psnr": float(np.mean([r.psnr for r in sel])),
                "ssim": float(np.mean([r.ssim for r in sel])),
                "l1": float(np.mean([r.l1 for r in sel])),
                "l2": float(np.mean([r.l2 for r in sel])),
            }
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "id", "bucket", "hole_ratio", "psnr_db", "ssim", "l1_percent", "l2_percent"])
            for r in sorted(self.rows, key=lambda r: r.id):
                w.writerow(["image", r.id, r.bucket, f"{r.hole_ratio:.6f}", f"{r.psnr:.6f}",
                            f"{r.ssim:.6f}", f"{r.l1:.6f}", f"{r.l2:.6f}"])
            for label, m in self.bucket_means().items():
                w.writerow(["bucket_mean", m["count"], label, "", f"{m['psnr']:.6f}",
                            f"{m['ssim']:.6f}", f"{m['l1']:.6f}", f"{m['l2']:.6f}"])
