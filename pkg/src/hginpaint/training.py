"""Adam, training state and the alternating discriminator/generator loop."""

from __future__ import annotations

import csv
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .config import RunConfig
from .data import augment, load_corpus, synth_corpus
from .losses import (FeatureExtractor, content_loss, composite, edge_loss, gan_loss_d, gan_loss_g,
                     perceptual_loss, total_loss)
from .masks import MaskSpec, gen_brush_mask, gen_center_mask, schedule_step
from .nets import Discriminator, Generator

log = logging.getLogger(__name__)

METRIC_FIELDS = ("iteration", "epoch", "loss_hole", "loss_valid", "loss_adv", "loss_p", "loss_edge",
                 "loss_total", "loss_d", "lr", "hole_ratio", "grad_norm_g", "grad_norm_d")


class TrainingError(RuntimeError):
    pass


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


@dataclass
class TrainingState:
    iteration: int = 0
    epoch: int = 0
    learning_rate: float = 1e-4
    rng_seed: int = 0
    gen_opt: AdamState = field(default_factory=AdamState)
    disc_opt: AdamState = field(default_factory=AdamState)


def adam_step(params: list[Parameter], opt: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update in place. Raises on non-finite gradients."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient in parameter {p.name}")
    opt.step += 1
    c1 = 1.0 - beta1 ** opt.step
    c2 = 1.0 - beta2 ** opt.step
    for p in params:
        m = opt.m.get(p.name)
        if m is None:
            m = opt.m[p.name] = np.zeros_like(p.data)
            opt.v[p.name] = np.zeros_like(p.data)
        v = opt.v[p.name]
        m *= beta1
        m += (1.0 - beta1) * p.grad
        v *= beta2
        v += (1.0 - beta2) * p.grad * p.grad
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def _grad_norm(params) -> float:
    return math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params))


class Trainer:
    """Owns the networks, the corpus and the training state for one run."""

    def __init__(self, cfg: RunConfig, corpus: np.ndarray | None = None):
        self.cfg = cfg
        self.net_cfg = cfg.network()
        self.dtype = self.net_cfg.np_dtype
        self.gen = Generator(self.net_cfg)
        self.disc = Discriminator(self.net_cfg)
        self.extractor = FeatureExtractor(cfg.extractor_seed, dtype=self.dtype)
        self.weights = cfg.loss_weights()
        self.schedule = cfg.schedule()
        if corpus is None:
            if cfg.data_dir:
                corpus = load_corpus(cfg.data_dir)
            else:
                corpus = synth_corpus(cfg.synth_count, cfg.image_size, cfg.seed)
        if corpus.shape[1:] != (cfg.image_size, cfg.image_size, 3):
            raise ValueError(f"corpus images {corpus.shape[1:]} do not match image_size {cfg.image_size}")
        self.corpus = corpus
        self.state = TrainingState(learning_rate=cfg.lr, rng_seed=cfg.seed)

    @property
    def steps_per_epoch(self) -> int:
        return max(1, len(self.corpus) // self.cfg.batch_size)

    def sample_batch(self, iteration: int) -> tuple[np.ndarray, np.ndarray]:
        """Batch for ``iteration``; depends only on (seed, iteration) so resumes are exact."""
        cfg = self.cfg
        epoch, pos = divmod(iteration, self.steps_per_epoch)
        perm = np.random.default_rng([cfg.seed, 11, epoch]).permutation(len(self.corpus))
        idx = perm[pos * cfg.batch_size:(pos + 1) * cfg.batch_size]
        rng = np.random.default_rng([cfg.seed, 13, iteration])
        lo_hi = schedule_step(self.schedule, iteration)
        images, masks = [], []
        for i in idx:
            img = self.corpus[i]
            if cfg.augment:
                img = augment(img, rng)
            images.append(img)
            if cfg.mask_kind == "center":
                masks.append(gen_center_mask(cfg.image_size))
            else:
                spec = MaskSpec(image_size=cfg.image_size, ratio_range=lo_hi, seed=int(rng.integers(2**63)))
                masks.append(gen_brush_mask(spec))
        return np.stack(images).astype(self.dtype), np.stack(masks).astype(self.dtype)

    def _check(self, terms: dict[str, float]) -> None:
        bad = {k: v for k, v in terms.items() if not math.isfinite(v)}
        if bad:
            for k, v in terms.items():
                print(f"  {k} = {v!r}", file=sys.stderr)
            raise TrainingError(f"non-finite loss term(s) {sorted(bad)} at iteration {self.state.iteration}")

    def train_step(self, I_gt: np.ndarray, R: np.ndarray) -> dict[str, float]:
        cfg, st = self.cfg, self.state
        I_in = I_gt * (1.0 - R)
        out = self.gen(Tensor(I_in), R)
        comp = composite(out.refine, I_gt, R)

        # discriminator update on a detached fake
        d_params = self.disc.parameters()
        for p in d_params:
            p.zero_grad()
        loss_d = gan_loss_d(self.disc(I_gt, R), self.disc(Tensor(comp.data), R), cfg.gan_mode)
        self._check({"loss_d": float(loss_d.data)})
        ad.backward(loss_d)
        grad_norm_d = _grad_norm(d_params)
        adam_step(d_params, st.disc_opt, st.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)

        # generator update
        g_params = self.gen.parameters()
        for p in g_params:
            p.zero_grad()
        hole, valid = content_loss(out.coarse, out.refine, I_gt, R)
        terms = {
            "hole": hole,
            "valid": valid,
            "adv": gan_loss_g(self.disc(comp, R), cfg.gan_mode),
            "p": perceptual_loss(out.refine, comp, I_gt, self.extractor),
            "edge": edge_loss(out.refine, I_gt),
        }
        total, _ = total_loss(terms, self.weights)
        record = {f"loss_{k}": float(v.data) for k, v in terms.items()}
        record["loss_total"] = float(total.data)
        self._check(record)
        ad.backward(total)
        grad_norm_g = _grad_norm(g_params)
        adam_step(g_params, st.gen_opt, st.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)

        record.update(loss_d=float(loss_d.data), grad_norm_g=grad_norm_g, grad_norm_d=grad_norm_d,
                      hole_ratio=float(R.mean()))
        return record

    def step(self) -> dict[str, float]:
        """Run one iteration, advance counters and apply per-epoch decay."""
        st = self.state
        I_gt, R = self.sample_batch(st.iteration)
        record = self.train_step(I_gt, R)
        record = {"iteration": st.iteration, "epoch": st.epoch, "lr": st.learning_rate, **record}
        st.iteration += 1
        if st.iteration % self.steps_per_epoch == 0:
            st.epoch += 1
            st.learning_rate *= self.cfg.lr_decay
        return record

    def run(self, until: int, metrics_path=None, checkpoint_dir=None, on_record=None) -> list[dict]:
        from .checkpoint import save_checkpoint

        records = []
        writer = fh = None
        if metrics_path is not None:
            metrics_path = Path(metrics_path)
            fresh = not metrics_path.exists() or metrics_path.stat().st_size == 0
            fh = open(metrics_path, "a", newline="")
            writer = csv.writer(fh)
            if fresh:
                writer.writerow(METRIC_FIELDS)
        try:
            while self.state.iteration < until:
                rec = self.step()
                records.append(rec)
                if writer is not None:
                    writer.writerow([repr(rec[k]) for k in METRIC_FIELDS])
                    fh.flush()
                if on_record is not None:
                    on_record(rec)
                it = self.state.iteration
                if checkpoint_dir is not None and (it % self.cfg.checkpoint_every == 0 or it == until):
                    save_checkpoint(Path(checkpoint_dir) / f"ckpt_{it:06d}.hgin", self)
        finally:
            if fh is not None:
                fh.close()
        return records


def inpaint(gen: Generator, image: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Complete (b, h, w, 3) images; returns (coarse, refine, composite) arrays."""
    dtype = gen.cfg.np_dtype
    image, mask = image.astype(dtype), mask.astype(dtype)
    with ad.no_grad():
        out = gen(Tensor(image * (1.0 - mask)), mask)
        comp = composite(out.refine, image, mask)
    return out.coarse.data, out.refine.data, comp.data


def truncate_metrics(path, iteration: int) -> None:
    """Drop metric rows at or after ``iteration`` (used when resuming)."""
    path = Path(path)
    if not path.exists():
        return
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return
    keep = [rows[0]] + [r for r in rows[1:] if int(r[0]) < iteration]
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(keep)
