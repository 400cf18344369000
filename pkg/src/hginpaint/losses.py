"""Training objectives: content, adversarial, perceptual, edge, and their weighted sum.

All L1 norms are means over every element of the operand, so weights do not
depend on resolution or hole size normalisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .hypergraph import kaiming_uniform
from .nets import blend


@dataclass
class LossWeights:
    lambda_hole: float = 6.0
    lambda_valid: float = 1.0
    lambda_adv: float = 0.1
    lambda_p: float = 0.05
    lambda_edge: float = 0.1

    def __post_init__(self):
        vals = [getattr(self, f.name) for f in fields(self)]
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"loss weights must be finite and nonnegative: {vals}")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


def _l1(x: Tensor) -> Tensor:
    return ad.mean(ad.tabs(x))


def content_loss(I_coarse, I_refine, I_gt, R) -> tuple[Tensor, Tensor]:
    """(L_hole, L_valid): masked L1 on the refine output plus half the coarse one."""
    I_coarse, I_refine = ad.as_tensor(I_coarse), ad.as_tensor(I_refine)
    I_gt = ad.as_tensor(I_gt, like=I_refine)
    R = ad.as_tensor(R, like=I_refine)
    keep = 1.0 - R
    d_ref = I_refine - I_gt
    d_coa = I_coarse - I_gt
    hole = _l1(R * d_ref) + 0.5 * _l1(R * d_coa)
    valid = _l1(keep * d_ref) + 0.5 * _l1(keep * d_coa)
    return hole, valid


def gan_loss_d(real_logits, fake_logits, mode: str = "vanilla") -> Tensor:
    real_logits, fake_logits = ad.as_tensor(real_logits), ad.as_tensor(fake_logits)
    if mode == "hinge":
        return ad.mean(ad.relu(1.0 - real_logits)) + ad.mean(ad.relu(1.0 + fake_logits))
    # -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
    return ad.mean(ad.softplus(-real_logits)) + ad.mean(ad.softplus(fake_logits))


def gan_loss_g(fake_logits, mode: str = "vanilla") -> Tensor:
    fake_logits = ad.as_tensor(fake_logits)
    if mode == "hinge":
        return -ad.mean(fake_logits)
    return ad.mean(ad.softplus(-fake_logits))


class FeatureExtractor:
    """Frozen, seeded stack of three stride-2 3x3 conv + ELU stages (16/32/64 channels).

    Stands in for a pretrained network; any object with ``features(x) -> list``
    can be passed to :func:`perceptual_loss` instead.
    """

    widths = (16, 32, 64)

    def __init__(self, seed: int = 1234, in_channels: int = 3, dtype=np.float64):
        rng = np.random.default_rng([seed, 77])
        self.kernels, self.biases = [], []
        c = in_channels
        for width in self.widths:
            k = kaiming_uniform(rng, (3, 3, c, width), 9 * c, dtype=dtype)
            k.flags.writeable = False
            self.kernels.append(Tensor(k))
            b = np.zeros(width, dtype=dtype)
            b.flags.writeable = False
            self.biases.append(Tensor(b))
            c = width

    def features(self, x: Tensor) -> list[Tensor]:
        out = []
        for k, b in zip(self.kernels, self.biases):
            x = ad.elu(ad.conv2d(x, k, b, stride=2))
            out.append(x)
        return out


def composite(I_refine, I_gt, R) -> Tensor:
    """Prediction inside holes, ground truth elsewhere."""
    return blend(I_gt, I_refine, R)


def perceptual_loss(I_refine, I_comp, I_gt, extractor) -> Tensor:
    I_refine, I_comp = ad.as_tensor(I_refine), ad.as_tensor(I_comp)
    I_gt = ad.as_tensor(I_gt, like=I_refine)
    with ad.no_grad():
        target = [Tensor(f.data) for f in extractor.features(I_gt)]
    total = None
    for pred in (I_refine, I_comp):
        for f, t in zip(extractor.features(pred), target):
            term = _l1(f - t)
            total = term if total is None else total + term
    return total


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def sobel_kernels(channels: int, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (depthwise) Sobel kernels as block-diagonal (3, 3, c, c) arrays."""
    kx = np.zeros((3, 3, channels, channels), dtype=dtype)
    ky = np.zeros_like(kx)
    for c in range(channels):
        kx[:, :, c, c] = _SOBEL_X
        ky[:, :, c, c] = _SOBEL_X.T
    return kx, ky


def sobel_magnitude(x: Tensor) -> Tensor:
    """Per-channel gradient magnitude; borders are replicated so constants map to ~0."""
    kx, ky = sobel_kernels(x.shape[-1], x.dtype)
    xp = ad.pad_edge(x, 1)
    gx = ad.conv2d(xp, Tensor(kx), padding="valid")
    gy = ad.conv2d(xp, Tensor(ky), padding="valid")
    return ad.sqrt(gx * gx + gy * gy + 1e-12)


def edge_loss(I_refine, I_gt) -> Tensor:
    I_refine = ad.as_tensor(I_refine)
    I_gt = ad.as_tensor(I_gt, like=I_refine)
    if I_refine.shape != I_gt.shape:
        raise ValueError(f"edge_loss: shapes differ {I_refine.shape} vs {I_gt.shape}")
    return _l1(sobel_magnitude(I_refine) - sobel_magnitude(I_gt))


TERMS = ("hole", "valid", "adv", "p", "edge")


def total_loss(terms: dict[str, Tensor], weights: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the five terms plus a float breakdown of the weighted terms."""
    total = None
    breakdown = {}
    for name in TERMS:
        term = terms[name]
        weighted = getattr(weights, f"lambda_{name}") * ad.as_tensor(term)
        breakdown[name] = float(weighted.data)
        total = weighted if total is None else total + weighted
    return total, breakdown
