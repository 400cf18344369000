"""Seeded synthetic image corpus, directory loading and augmentation."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .pnm import read_image, write_image


def _synth_one(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    theta = rng.uniform(0, 2 * np.pi)
    t = np.clip((np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5)) * 1.4 + 0.5, 0, 1)
    c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    img = (1 - t)[..., None] * c0 + t[..., None] * c1

    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(0, 1, 2)
        s = rng.uniform(0.08, 0.25)
        a = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))[..., None]
        img = (1 - a) * img + a * rng.uniform(0, 1, 3)

    kind = rng.integers(0, 3)
    if kind == 0:
        # stripes in one half-plane
        phi = rng.uniform(0, np.pi)
        freq = rng.uniform(2.0, 5.0)
        u = np.cos(phi) * xx + np.sin(phi) * yy
        stripe = (np.sin(2 * np.pi * freq * u) > 0).astype(float)[..., None]
        region = xx > rng.uniform(0.2, 0.8) if rng.random() < 0.5 else np.ones_like(xx, dtype=bool)
        img = np.where(region[..., None], 0.6 * img + 0.4 * stripe, img)
    elif kind == 1:
        # checker patch
        n = int(rng.integers(2, 5))
        y0, x0 = rng.uniform(0, 0.5, 2)
        ext = rng.uniform(0.3, 0.5)
        inside = (yy >= y0) & (yy < y0 + ext) & (xx >= x0) & (xx < x0 + ext)
        check = ((np.floor((yy - y0) / ext * n) + np.floor((xx - x0) / ext * n)) % 2)
        ca, cb = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
        patch = np.where(check[..., None] > 0, ca, cb)
        img = np.where(inside[..., None], patch, img)
    return np.clip(img, 0.0, 1.0)


def synth_corpus(count: int, size: int, seed: int) -> np.ndarray:
    """``count`` images of shape (size, size, 3); image i depends only on (seed, i)."""
    return np.stack([_synth_one(np.random.default_rng([seed, i]), size) for i in range(count)])


def write_corpus(images: np.ndarray, out_dir, prefix: str = "img") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        p = out / f"{prefix}_{i:05d}.ppm"
        write_image(p, img)
        paths.append(p)
    return paths


def list_images(directory, suffixes=(".ppm", ".pgm")) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in suffixes)


def load_corpus(directory) -> np.ndarray:
    paths = list_images(directory, (".ppm",))
    if not paths:
        raise FileNotFoundError(f"no .ppm images in {directory}")
    imgs = [read_image(p) for p in paths]
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise ValueError(f"images in {directory} have differing shapes {sorted(shapes)}")
    return np.stack(imgs)


def augment(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random horizontal flip and 90-degree rotation (square images)."""
    if rng.random() < 0.5:
        img = img[:, ::-1]
    return np.ascontiguousarray(np.rot90(img, int(rng.integers(0, 4))))
