"""Finite-difference gradient suites used by the ``gradcheck`` command and the tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, finite_diff_check
from .hypergraph import HypergraphLayerParams, hypergraph_forward
from .losses import (FeatureExtractor, LossWeights, composite, content_loss, edge_loss, gan_loss_d,
                     gan_loss_g, perceptual_loss, total_loss)
from .masks import MaskSpec, gen_brush_mask
from .nets import Discriminator, GatedConv, GatedConvSpec, Generator, NetworkConfig

EPS = 1e-5


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _weighted_sum(out: Tensor, rng: np.random.Generator) -> Callable[[], Tensor]:
    w = Tensor(rng.standard_normal(out.shape))
    return lambda t: ad.tsum(t * w)


def check_hypergraph(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng([seed, 100])
    params = HypergraphLayerParams.create(rng, 3, 3, 16, embed=2, edges=4)
    for p in (params.b_psi, params.b_lambda, params.b_omega):
        p.data[:] = rng.uniform(-0.1, 0.1, p.shape)
    x = Parameter("x", rng.standard_normal((1, 4, 4, 3)))
    w = Tensor(rng.standard_normal((1, 4, 4, 3)))
    err = finite_diff_check(lambda: ad.tsum(hypergraph_forward(x, params) * w),
                            [x] + params.parameters(), EPS)
    return CheckResult("hypergraph layer (X, psi, lambda, omega, theta)", err, 1e-4)


def check_gated(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng([seed, 101])
    layer = GatedConv("g", GatedConvSpec(3, 1, 1, 4, 3), rng)
    for p in (layer.b_f, layer.b_g):
        p.data[:] = rng.uniform(-0.1, 0.1, p.shape)
    x = Parameter("x", rng.standard_normal((1, 8, 8, 4)))
    w = Tensor(rng.standard_normal((1, 8, 8, 3)))
    err = finite_diff_check(lambda: ad.tsum(layer(x) * w), [x] + layer.parameters(), EPS)
    return CheckResult("gated convolution", err, 1e-4)


def _loss_fixture(seed: int, size: int = 16):
    rng = np.random.default_rng([seed, 102])
    gt = rng.uniform(0, 1, (1, size, size, 3))
    R = gen_brush_mask(MaskSpec(image_size=size, ratio_range=(0.2, 0.4), seed=seed))[None]
    coarse = Parameter("coarse", rng.uniform(0, 1, gt.shape))
    refine = Parameter("refine", rng.uniform(0, 1, gt.shape))
    return rng, gt, R, coarse, refine


def check_losses(seed: int = 0) -> list[CheckResult]:
    rng, gt, R, coarse, refine = _loss_fixture(seed)
    out = [
        CheckResult("hole loss", finite_diff_check(
            lambda: content_loss(coarse, refine, gt, R)[0], [coarse, refine], EPS), 1e-4),
        CheckResult("valid loss", finite_diff_check(
            lambda: content_loss(coarse, refine, gt, R)[1], [coarse, refine], EPS), 1e-4),
    ]
    real = Parameter("real", rng.standard_normal((1, 2, 2, 1)))
    fake = Parameter("fake", rng.standard_normal((1, 2, 2, 1)))
    out.append(CheckResult("adversarial loss (G and D)", max(
        finite_diff_check(lambda: gan_loss_g(fake), [fake], EPS),
        finite_diff_check(lambda: gan_loss_d(real, fake), [real, fake], EPS)), 1e-4))
    ext = FeatureExtractor(seed)
    out.append(CheckResult("perceptual loss", finite_diff_check(
        lambda: perceptual_loss(refine, composite(refine, gt, R), gt, ext), [refine], EPS), 1e-4))
    out.append(CheckResult("edge loss", finite_diff_check(
        lambda: edge_loss(refine, gt), [refine], EPS), 1e-4))
    return out


def check_generator(seed: int = 0, max_coords: int = 8) -> CheckResult:
    """Full coarse -> blend -> refine generator loss on a 1x16x16x3 input."""
    cfg = NetworkConfig(base_channels=4, input_resolution=16, hg_window=3, seed=seed)
    gen, disc = Generator(cfg), Discriminator(cfg)
    rng = np.random.default_rng([seed, 103])
    for p in gen.parameters():
        # nonzero biases keep activations away from relu/abs kinks; hypergraph
        # biases stay zero so the incidence keeps mixed-sign structure
        if p.name.split(".")[-1].startswith("b") and ".hg." not in p.name:
            p.data[:] = rng.uniform(-0.5, 0.5, p.shape)
    gt = rng.uniform(0, 1, (1, 16, 16, 3))
    R = gen_brush_mask(MaskSpec(image_size=16, ratio_range=(0.2, 0.4), seed=seed))[None]
    I_in = gt * (1 - R)
    ext = FeatureExtractor(seed)
    weights = LossWeights()

    def loss():
        out = gen(I_in, R)
        comp = composite(out.refine, gt, R)
        hole, valid = content_loss(out.coarse, out.refine, gt, R)
        terms = {"hole": hole, "valid": valid, "adv": gan_loss_g(disc(comp, R)),
                 "p": perceptual_loss(out.refine, comp, gt, ext), "edge": edge_loss(out.refine, gt)}
        return total_loss(terms, weights)[0]

    err = finite_diff_check(loss, gen.parameters(), EPS, max_coords=max_coords, seed=seed, extended=True)
    return CheckResult("full generator loss (16x16)", err, 1e-3)


def run_suite(module: str = "all", seed: int = 0) -> list[CheckResult]:
    results = []
    if module in ("all", "hypergraph"):
        results.append(check_hypergraph(seed))
    if module in ("all", "gated"):
        results.append(check_gated(seed))
    if module in ("all", "losses"):
        results.extend(check_losses(seed))
    if module in ("all", "generator"):
        results.append(check_generator(seed))
    return results
