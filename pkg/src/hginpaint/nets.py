"""Gated-convolution generator (coarse -> blend -> refine) and patch discriminator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .hypergraph import HypergraphLayerParams, hypergraph_forward, kaiming_uniform


@dataclass(frozen=True)
class GatedConvSpec:
    kernel: int
    stride: int
    dilation: int
    c_in: int
    c_out: int
    activation: str = "elu"
    upsample: int = 1
    gated: bool = True

    def __post_init__(self):
        if self.kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.activation not in ("elu", "leaky_relu", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class NetworkConfig:
    base_channels: int = 32
    input_resolution: int = 32
    use_hypergraph: bool = True
    disc_gated: bool = True
    hg_embed: int = 0    # 0 -> max(C/4, 8)
    hg_edges: int = 0    # 0 -> ceil(N/4)
    hg_window: int = 7
    hg_epsilon: float = 1e-6
    # add the hypergraph output to its input instead of replacing the bottleneck features
    hg_residual: bool = True
    dtype: str = "float64"
    seed: int = 0

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def generator_layers(self) -> dict[str, GatedConvSpec]:
        c = self.base_channels
        return {
            "enc1": GatedConvSpec(5, 2, 1, 4, c),
            "enc2": GatedConvSpec(3, 2, 1, c, 2 * c),
            "dil2": GatedConvSpec(3, 1, 2, 2 * c, 4 * c),
            "dil4": GatedConvSpec(3, 1, 4, 4 * c, 4 * c),
            "dec1": GatedConvSpec(3, 1, 1, 4 * c, 2 * c, upsample=2),
            "dec2": GatedConvSpec(3, 1, 1, 2 * c, c, upsample=2),
        }

    def disc_layers(self) -> dict[str, GatedConvSpec]:
        c = self.base_channels
        widths = [4, c, 2 * c, 4 * c, 4 * c]
        return {f"d{i + 1}": GatedConvSpec(5, 2, 1, widths[i], widths[i + 1], "leaky_relu",
                                           gated=self.disc_gated)
                for i in range(4)}


def _activate(x: Tensor, name: str) -> Tensor:
    if name == "elu":
        return ad.elu(x)
    if name == "leaky_relu":
        return ad.leaky_relu(x, 0.2)
    return x


class GatedConv:
    """``phi(conv(W_f, x)) * sigmoid(conv(W_g, x))``; a plain ``phi(conv)`` when not gated."""

    def __init__(self, name: str, spec: GatedConvSpec, rng: np.random.Generator, dtype=np.float64):
        self.name, self.spec = name, spec
        shape = (spec.kernel, spec.kernel, spec.c_in, spec.c_out)
        fan_in = spec.kernel * spec.kernel * spec.c_in
        self.w_f = Parameter(f"{name}.w_f", kaiming_uniform(rng, shape, fan_in), dtype=dtype)
        self.b_f = Parameter(f"{name}.b_f", np.zeros(spec.c_out), dtype=dtype)
        if spec.gated:
            self.w_g = Parameter(f"{name}.w_g", kaiming_uniform(rng, shape, fan_in), dtype=dtype)
            self.b_g = Parameter(f"{name}.b_g", np.zeros(spec.c_out), dtype=dtype)

    def parameters(self) -> list[Parameter]:
        if self.spec.gated:
            return [self.w_f, self.b_f, self.w_g, self.b_g]
        return [self.w_f, self.b_f]

    def __call__(self, x: Tensor) -> Tensor:
        return gated_conv(x, self.spec, self)


def gated_conv(x: Tensor, spec: GatedConvSpec, params: GatedConv) -> Tensor:
    if x.shape[-1] != spec.c_in:
        raise ValueError(f"{params.name}: expected {spec.c_in} input channels, got shape {x.shape}")
    x = ad.upsample_nearest(x, spec.upsample)
    kw = dict(stride=spec.stride, dilation=spec.dilation, padding="same")
    features = _activate(ad.conv2d(x, params.w_f, params.b_f, **kw), spec.activation)
    if not spec.gated:
        return features
    gate = ad.sigmoid(ad.conv2d(x, params.w_g, params.b_g, **kw))
    return features * gate


class Conv1x1:
    def __init__(self, name: str, c_in: int, c_out: int, rng: np.random.Generator, dtype=np.float64):
        self.w = Parameter(f"{name}.w", kaiming_uniform(rng, (1, 1, c_in, c_out), c_in), dtype=dtype)
        self.b = Parameter(f"{name}.b", np.zeros(c_out), dtype=dtype)

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w, self.b)


def _mask_tensor(R, like: Tensor) -> Tensor:
    R = ad.as_tensor(R, like=like)
    if R.shape[-1] != 1 or R.shape[:-1] != like.shape[:-1]:
        raise ValueError(f"mask shape {R.shape} does not match image shape {like.shape}")
    return R


def blend(I_in, I_pred, R) -> Tensor:
    """Holes (R=1) from the prediction, the rest from the input."""
    I_in, I_pred = ad.as_tensor(I_in), ad.as_tensor(I_pred)
    if I_in.shape != I_pred.shape:
        raise ValueError(f"blend: shapes differ {I_in.shape} vs {I_pred.shape}")
    R = _mask_tensor(R, I_in)
    return R * I_pred + (1.0 - R) * I_in


class GeneratorStage:
    def __init__(self, name: str, cfg: NetworkConfig, rng: np.random.Generator, with_hypergraph: bool):
        dtype = cfg.np_dtype
        self.name = name
        self.residual = cfg.hg_residual
        self.layers = [GatedConv(f"{name}.{k}", s, rng, dtype) for k, s in cfg.generator_layers().items()]
        self.hg = None
        if with_hypergraph:
            width = 4 * cfg.base_channels
            n_nodes = (cfg.input_resolution // 4) ** 2
            self.hg = HypergraphLayerParams.create(
                rng, width, width, n_nodes, embed=cfg.hg_embed or None, edges=cfg.hg_edges or None,
                window=cfg.hg_window, epsilon=cfg.hg_epsilon, prefix=f"{name}.hg", dtype=dtype)
        self.out = Conv1x1(f"{name}.out", cfg.base_channels, 3, rng, dtype)

    def parameters(self) -> list[Parameter]:
        params = []
        for layer in self.layers[:4]:
            params += layer.parameters()
        if self.hg is not None:
            params += self.hg.parameters()
        for layer in self.layers[4:]:
            params += layer.parameters()
        return params + self.out.parameters()

    def __call__(self, image: Tensor, R) -> Tensor:
        b, h, w, _ = image.shape
        if h % 4 or w % 4:
            raise ValueError(f"{self.name}: resolution {h}x{w} not divisible by 4")
        x = ad.concat([image, _mask_tensor(R, image)], axis=-1)
        for layer in self.layers[:4]:
            x = layer(x)
        if self.hg is not None:
            hx = hypergraph_forward(x, self.hg)
            x = x + hx if self.residual else hx
        for layer in self.layers[4:]:
            x = layer(x)
        return (ad.tanh(self.out(x)) + 1.0) * 0.5


class GeneratorOutput(NamedTuple):
    coarse: Tensor
    blended: Tensor
    refine: Tensor


class Generator:
    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 1])
        self.coarse = GeneratorStage("coarse", cfg, rng, with_hypergraph=False)
        self.refine = GeneratorStage("refine", cfg, rng, with_hypergraph=cfg.use_hypergraph)

    def parameters(self) -> list[Parameter]:
        return self.coarse.parameters() + self.refine.parameters()

    def __call__(self, I_in, R) -> GeneratorOutput:
        I_in = ad.as_tensor(I_in)
        coarse = self.coarse(I_in, R)
        blended = blend(I_in, coarse, R)
        return GeneratorOutput(coarse, blended, self.refine(blended, R))


def coarse_forward(gen: Generator, I_masked, R) -> Tensor:
    return gen.coarse(ad.as_tensor(I_masked), R)


def refine_forward(gen: Generator, I_blend, R) -> Tensor:
    return gen.refine(ad.as_tensor(I_blend), R)


class Discriminator:
    """Four stride-2 gated convs with leaky-ReLU, then a 1x1 conv to patch logits."""

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 2])
        dtype = cfg.np_dtype
        self.layers = [GatedConv(f"disc.{k}", s, rng, dtype) for k, s in cfg.disc_layers().items()]
        self.out = Conv1x1("disc.out", 4 * cfg.base_channels, 1, rng, dtype)

    def parameters(self) -> list[Parameter]:
        params = []
        for layer in self.layers:
            params += layer.parameters()
        return params + self.out.parameters()

    def __call__(self, image, R) -> Tensor:
        image = ad.as_tensor(image)
        x = ad.concat([image, _mask_tensor(R, image)], axis=-1)
        for layer in self.layers:
            x = layer(x)
        return self.out(x)


def discriminator_forward(disc: Discriminator, image, R) -> Tensor:
    return disc(image, R)
