"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 usage error. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("hginpaint")


class UsageError(Exception):
    pass


def _parse_ratio(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    return lo, hi


def cmd_train(args) -> int:
    from .checkpoint import load_trainer
    from .config import load_config
    from .plotting import plot_training_curves
    from .training import Trainer, truncate_metrics

    cfg = load_config(args.config)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = out_dir / "metrics.csv"
    if args.resume:
        trainer = load_trainer(args.resume)
        trainer.cfg = cfg
        truncate_metrics(metrics, trainer.state.iteration)
        log.info("resumed from %s at iteration %d", args.resume, trainer.state.iteration)
    else:
        trainer = Trainer(cfg)
        if metrics.exists():
            metrics.unlink()

    def report(rec):
        it = rec["iteration"]
        if it % 50 == 0 or it + 1 == cfg.iterations:
            log.info("iter %d  hole %.4f  total %.4f  D %.4f  lr %.3g", it, rec["loss_hole"],
                     rec["loss_total"], rec["loss_d"], rec["lr"])

    trainer.run(cfg.iterations, metrics_path=metrics, checkpoint_dir=out_dir, on_record=report)
    from .checkpoint import save_checkpoint

    save_checkpoint(out_dir / "final.hgin", trainer)
    plot_training_curves(metrics, out_dir / "metrics.png")
    print(out_dir / "final.hgin")
    return 0


def cmd_inpaint(args) -> int:
    from .checkpoint import load_generator
    from .pnm import read_image, read_mask, write_image
    from .training import inpaint

    image = read_image(args.image)
    mask = read_mask(args.mask)
    if image.shape[:2] != mask.shape[:2]:
        raise UsageError(f"image {args.image} has shape {image.shape[:2]} but mask {args.mask} "
                         f"has shape {mask.shape[:2]}")
    if image.shape[2] != 3:
        raise UsageError(f"image must be a P6 colour image, got {image.shape}")
    cfg, gen = load_generator(args.ckpt)
    if image.shape[0] % 4 or image.shape[1] % 4:
        raise UsageError(f"image size {image.shape[:2]} must be divisible by 4")
    coarse, refine, comp = inpaint(gen, image[None], mask[None])
    out = Path(args.out)
    write_image(out, comp[0])
    if args.emit_coarse:
        write_image(out.with_name(out.stem + "_coarse" + out.suffix), coarse[0])
        write_image(out.with_name(out.stem + "_refine" + out.suffix), refine[0])
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_generator
    from .data import list_images
    from .metrics import EvalReport
    from .plotting import plot_eval_report
    from .pnm import read_image, read_mask
    from .training import inpaint

    images = list_images(args.images, (".ppm",))
    masks = {p.stem: p for p in list_images(args.masks, (".pgm",))}
    mask_list = sorted(masks.values())
    if not images:
        raise UsageError(f"no .ppm images in {args.images}")
    if not mask_list:
        raise UsageError(f"no .pgm masks in {args.masks}")
    _, gen = load_generator(args.ckpt)
    report = EvalReport()
    for i, path in enumerate(images):
        # masks pair by file stem, else by sorted position
        mpath = masks.get(path.stem, mask_list[i % len(mask_list)])
        img, mask = read_image(path), read_mask(mpath)
        if img.shape[:2] != mask.shape[:2]:
            raise UsageError(f"image {path} has shape {img.shape[:2]} but mask {mpath} has {mask.shape[:2]}")
        _, _, comp = inpaint(gen, img[None], mask[None])
        report.add(path.stem, comp[0], img, mask)
    report.write_csv(args.report)
    plot_eval_report(report, Path(args.report).with_suffix(".png"))
    for label, m in report.bucket_means().items():
        print(f"{label:8s} n={m['count']:3d}  PSNR {m['psnr']:.2f}  SSIM {m['ssim']:.4f}  "
              f"L1 {m['l1']:.3f}  L2 {m['l2']:.3f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    failed = 0
    for r in run_suite(args.module, args.seed):
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{status}  {r.name:50s} max rel err {r.error:.3e}  (tol {r.tolerance:g})")
    return 1 if failed else 0


def cmd_make_masks(args) -> int:
    from .masks import MaskSpec, gen_brush_mask, gen_center_mask, hole_ratio
    from .pnm import write_mask

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        if args.kind == "center":
            mask = gen_center_mask(args.size)
        else:
            mask = gen_brush_mask(MaskSpec(image_size=args.size, ratio_range=args.ratio, seed=args.seed + i))
        write_mask(out / f"mask_{i:05d}.pgm", mask)
        log.debug("mask %d ratio %.4f", i, hole_ratio(mask))
    return 0


def cmd_synth_data(args) -> int:
    from .data import synth_corpus, write_corpus

    write_corpus(synth_corpus(args.n, args.size, args.seed), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hginpaint", description="Hypergraph-convolution image inpainting")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="curriculum training")
    t.add_argument("--config", required=True)
    t.add_argument("--resume")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("inpaint", help="complete one image")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--image", required=True)
    i.add_argument("--mask", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--emit-coarse", action="store_true")
    i.set_defaults(func=cmd_inpaint)

    e = sub.add_parser("eval", help="per-bucket PSNR/SSIM/L1/L2 report")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--images", required=True)
    e.add_argument("--masks", required=True)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    g.add_argument("--module", choices=("all", "hypergraph", "gated", "losses", "generator"), default="all")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    m = sub.add_parser("make-masks", help="write hole masks as PGM")
    m.add_argument("--kind", choices=("center", "brush"), required=True)
    m.add_argument("--ratio", type=_parse_ratio, default=(0.1, 0.2))
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--size", type=int, default=32)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_make_masks)

    s = sub.add_parser("synth-data", help="write a synthetic PPM corpus")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_data)
    return p


def main(argv=None) -> int:
    from .checkpoint import CheckpointError
    from .config import ConfigError
    from .masks import MaskError
    from .pnm import PNMError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, CheckpointError, PNMError, MaskError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
