"""Flat ``key = value`` run configuration. Every key has a default; unknown keys are errors."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .losses import LossWeights
from .masks import IncrementalSchedule
from .nets import NetworkConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    dtype: str = "float64"
    # network
    image_size: int = 32
    base_channels: int = 32
    use_hypergraph: bool = True
    disc_gated: bool = True
    hg_embed: int = 0
    hg_edges: int = 0
    hg_window: int = 7
    hg_epsilon: float = 1e-6
    hg_residual: bool = True
    # losses
    lambda_hole: float = 6.0
    lambda_valid: float = 1.0
    lambda_adv: float = 0.1
    lambda_p: float = 0.05
    lambda_edge: float = 0.1
    gan_mode: str = "vanilla"
    extractor_seed: int = 1234
    # optimizer
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay: float = 0.96
    # curriculum and data
    stages: str = "2000:0.02-0.1,2000:0.1-0.2,2000:0.2-0.3,2000:0.3-0.4"
    mask_kind: str = "brush"
    data_dir: str = ""
    synth_count: int = 200
    batch_size: int = 1
    augment: bool = True
    # run
    iterations: int = 8000
    checkpoint_every: int = 500
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.gan_mode not in ("vanilla", "hinge"):
            raise ConfigError(f"gan_mode must be vanilla or hinge, got {self.gan_mode!r}")
        if self.mask_kind not in ("brush", "center"):
            raise ConfigError(f"mask_kind must be brush or center, got {self.mask_kind!r}")
        if self.image_size % 16:
            raise ConfigError(f"image_size must be a multiple of 16, got {self.image_size}")
        if self.batch_size < 1 or self.iterations < 0 or self.checkpoint_every < 1:
            raise ConfigError("batch_size and checkpoint_every must be >= 1, iterations >= 0")
        try:
            self.schedule()
            self.loss_weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def network(self) -> NetworkConfig:
        return NetworkConfig(
            base_channels=self.base_channels, input_resolution=self.image_size,
            use_hypergraph=self.use_hypergraph, disc_gated=self.disc_gated,
            hg_embed=self.hg_embed, hg_edges=self.hg_edges, hg_window=self.hg_window,
            hg_epsilon=self.hg_epsilon, hg_residual=self.hg_residual, dtype=self.dtype, seed=self.seed)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_hole, self.lambda_valid, self.lambda_adv, self.lambda_p, self.lambda_edge)

    def schedule(self) -> IncrementalSchedule:
        return IncrementalSchedule.parse(self.stages)

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "RunConfig":
        return RunConfig(**{**asdict(self), **changes})


def _coerce(key: str, raw: str, kind: type):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    types = {f.name: type(f.default) for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, types[key])
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
