"""Hole masks (1 = hole): centered square and free-form brush strokes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MaskError(RuntimeError):
    pass


@dataclass(frozen=True)
class MaskSpec:
    kind: str = "brush"
    image_size: int = 32
    ratio_range: tuple[float, float] = (0.1, 0.2)
    num_strokes: tuple[int, int] = (1, 60)
    width_range: tuple[float, float] = (0.06, 0.16)   # fraction of image size
    vertex_range: tuple[int, int] = (3, 8)
    length_range: tuple[float, float] = (0.08, 0.25)  # segment length, fraction of size
    angle_jitter: float = 0.8                          # radians
    spot_prob: float = 0.15
    seed: int = 0
    max_retries: int = 200

    def __post_init__(self):
        lo, hi = self.ratio_range
        if not 0 < lo <= hi < 1:
            raise ValueError(f"ratio_range must satisfy 0 < lo <= hi < 1, got {self.ratio_range}")
        if self.kind not in ("center", "brush"):
            raise ValueError(f"unknown mask kind {self.kind!r}")


def gen_center_mask(size: int) -> np.ndarray:
    if size % 2:
        raise ValueError(f"center mask needs an even size, got {size}")
    mask = np.zeros((size, size, 1))
    q = size // 4
    mask[q:q + size // 2, q:q + size // 2] = 1.0
    return mask


def _stamp_capsule(mask: np.ndarray, yy, xx, p0, p1, radius: float) -> None:
    d = p1 - p0
    denom = float(d @ d)
    if denom == 0:
        t = np.zeros_like(yy)
    else:
        t = np.clip(((yy - p0[0]) * d[0] + (xx - p0[1]) * d[1]) / denom, 0.0, 1.0)
    dist2 = (yy - p0[0] - t * d[0]) ** 2 + (xx - p0[1] - t * d[1]) ** 2
    mask[dist2 <= radius * radius] = 1.0


def _try_brush(spec: MaskSpec, rng: np.random.Generator) -> np.ndarray:
    size = spec.image_size
    lo, _ = spec.ratio_range
    mask = np.zeros((size, size))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    n_strokes = int(rng.integers(spec.num_strokes[0], spec.num_strokes[1] + 1))
    for s in range(n_strokes):
        radius = 0.5 * size * rng.uniform(*spec.width_range)
        p = rng.uniform(0, size, 2)
        if rng.random() < spec.spot_prob:
            _stamp_capsule(mask, yy, xx, p, p, radius * rng.uniform(1.0, 1.8))
        else:
            angle = rng.uniform(0, 2 * np.pi)
            for _ in range(int(rng.integers(spec.vertex_range[0], spec.vertex_range[1] + 1))):
                angle += rng.uniform(-spec.angle_jitter, spec.angle_jitter)
                step = size * rng.uniform(*spec.length_range)
                q = np.clip(p + step * np.array([np.sin(angle), np.cos(angle)]), 0, size)
                _stamp_capsule(mask, yy, xx, p, q, radius)
                p = q
                if mask.mean() >= lo and s + 1 >= spec.num_strokes[0]:
                    return mask
    return mask


def gen_brush_mask(spec: MaskSpec) -> np.ndarray:
    """Random-walk strokes with round caps plus round spots, hole ratio within ``ratio_range``."""
    if spec.kind == "center":
        return gen_center_mask(spec.image_size)
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.ratio_range
    ratio = 0.0
    for _ in range(spec.max_retries):
        mask = _try_brush(spec, rng)
        ratio = float(mask.mean())
        if lo <= ratio <= hi:
            return mask[:, :, None]
    raise MaskError(f"could not reach hole ratio in [{lo}, {hi}] after {spec.max_retries} "
                    f"retries (last achieved {ratio:.4f})")


def hole_ratio(mask) -> float:
    return float(np.mean(np.asarray(mask) > 0.5))


@dataclass
class IncrementalSchedule:
    """Stages of (iterations, (lo, hi)); the last stage is held forever."""
    stages: list[tuple[int, tuple[float, float]]]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("schedule needs at least one stage")
        prev = (0.0, 0.0)
        for k, (lo, hi) in self.stages:
            if k < 1:
                raise ValueError(f"stage length must be >= 1, got {k}")
            if lo < prev[0] or hi < prev[1]:
                raise ValueError(f"ratio ranges must be non-decreasing across stages: {self.stages}")
            prev = (lo, hi)

    def stage_index(self, iteration: int) -> int:
        edge = 0
        for i, (k, _) in enumerate(self.stages):
            edge += k
            if iteration < edge:
                return i
        return len(self.stages) - 1

    @classmethod
    def parse(cls, text: str) -> "IncrementalSchedule":
        """``"2000:0.02-0.1,2000:0.1-0.2"``."""
        stages = []
        for part in text.split(","):
            k, rng = part.strip().split(":")
            lo, hi = rng.split("-")
            stages.append((int(k), (float(lo), float(hi))))
        return cls(stages)

    def format(self) -> str:
        return ",".join(f"{k}:{lo:g}-{hi:g}" for k, (lo, hi) in self.stages)


def schedule_step(sched: IncrementalSchedule, iteration: int) -> tuple[float, float]:
    return sched.stages[sched.stage_index(iteration)][1]
