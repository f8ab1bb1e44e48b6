"""Command-line entry point: ``splatlab <command> ...``.

Exit codes: 0 on success, 1 for usage errors, 2 for bad or unreadable data.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .errors import SplatError
from .io import (
    Checkpoint,
    config_to_dict,
    load_cameras,
    load_checkpoint,
    load_config,
    load_image,
    load_ply,
    save_checkpoint,
    save_image,
)
from .msrn import load_weights, msrn_forward
from .rasterizer import render
from .scene import init_scene, sh_variance_report
from .trainer import PSNR_CAP, OptimizerState, TrainConfig, psnr, train
from .losses import ssim

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_globals(p, default):
    p.add_argument("--seed", type=int, default=default, help="override the configured seed")
    p.add_argument("--config", type=Path, default=default, help="TOML or JSON config file")


def build_parser():
    parser = _Parser(prog="splatlab", description="Gaussian splatting toolkit.")
    _add_globals(parser, None)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def command(name, help):
        p = sub.add_parser(name, help=help, description=help)
        # also accepted after the subcommand; only overrides when given
        _add_globals(p, argparse.SUPPRESS)
        return p

    p = command("init", "initialise a scene from a PLY point cloud")
    p.add_argument("ply", type=Path)
    p.add_argument("out", type=Path, help="checkpoint to write")
    p.add_argument("--sh-mode", choices=("standard", "dynamic"), default="standard")

    p = command("train", "optimise a checkpoint against posed images")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("cameras", type=Path, help="camera JSON (image paths inside)")
    p.add_argument("out", type=Path, help="checkpoint to write")
    p.add_argument("--log", type=Path, help="JSONL log path (default: OUT with .jsonl)")
    p.add_argument("--iterations", type=int)

    p = command("render", "render one camera of a checkpoint to PNG")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("cameras", type=Path)
    p.add_argument("camera_id")
    p.add_argument("out", type=Path)

    p = command("superres", "upscale a PNG with MSRN weights")
    p.add_argument("image", type=Path)
    p.add_argument("weights", type=Path)
    p.add_argument("out", type=Path)

    p = command("metrics", "PSNR/SSIM of two PNGs, or of a checkpoint over its cameras")
    p.add_argument("a", type=Path, help="PNG or checkpoint")
    p.add_argument("b", type=Path, help="PNG or camera JSON")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")

    p = command("sh-variance", "per-degree SH coefficient variance of a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--json", action="store_true")
    return parser


def _train_config(args):
    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _fmt_psnr(v):
    return f"{v:.4f}" + (" (capped)" if v >= PSNR_CAP else "")


def _image_metrics(a, b):
    k = min(11, a.shape[0], a.shape[1])
    return {"psnr": psnr(a, b), "ssim": ssim(a, b, kernel=k)}


def cmd_init(args, out):
    cfg = _train_config(args)
    cloud = load_ply(args.ply)
    scene = init_scene(cloud, cfg.sh_init, mode=args.sh_mode)
    meta = config_to_dict(cfg)
    meta["sh_mode"] = args.sh_mode
    save_checkpoint(args.out, Checkpoint(0, scene, OptimizerState.for_scene(scene), meta))
    print(f"wrote {args.out}: {len(scene)} gaussians, max degree {scene.max_degree}", file=out)


def cmd_train(args, out):
    cfg = _train_config(args)
    if args.iterations is not None:
        cfg = dataclasses.replace(cfg, iterations=args.iterations)
    ckpt = load_checkpoint(args.checkpoint)
    entries = load_cameras(args.cameras)
    cams = [e.camera for e in entries]
    images = [load_image(e.image) for e in entries]
    meta = {**ckpt.config, **config_to_dict(cfg)}
    log_path = args.log or args.out.with_suffix(".jsonl")

    def on_checkpoint(it, scene, state):
        save_checkpoint(args.out, Checkpoint(it, scene, state, meta))

    try:
        scene, log, state = train(ckpt.gaussians, cams, images, cfg, ckpt.optimizer,
                                  ckpt.iteration, on_checkpoint)
    except SplatError as e:
        if getattr(e, "log", None) is not None:
            e.log.write(log_path)
        raise
    save_checkpoint(args.out, Checkpoint(ckpt.iteration + cfg.iterations, scene, state, meta))
    log.write(log_path)
    print(f"wrote {args.out} and {log_path}: {len(scene)} gaussians, "
          f"final loss {log.totals()[-1]:.6f}", file=out)


def _find_camera(entries, camera_id):
    for e in entries:
        if str(e.id) == camera_id:
            return e
    raise SplatError(f"no camera with id {camera_id!r}")


def cmd_render(args, out):
    ckpt = load_checkpoint(args.checkpoint)
    entry = _find_camera(load_cameras(args.cameras), args.camera_id)
    cfg = _train_config(args) if args.config else None
    save_image(args.out, render(ckpt.gaussians, entry.camera, cfg.raster if cfg else None))
    print(f"wrote {args.out}", file=out)


def cmd_superres(args, out):
    model = load_weights(args.weights)
    img = load_image(args.image)
    sr = msrn_forward(img, model)
    save_image(args.out, sr)
    print(f"wrote {args.out}: {sr.shape[1]}x{sr.shape[0]}", file=out)


def cmd_metrics(args, out):
    if args.a.suffix.lower() == ".png":
        a, b = load_image(args.a), load_image(args.b)
        if a.shape != b.shape:
            raise SplatError(f"image shapes differ: {a.shape} vs {b.shape}")
        rows = [{"image": str(args.b), **_image_metrics(a, b)}]
    else:
        ckpt = load_checkpoint(args.a)
        rows = []
        for e in load_cameras(args.b):
            gt = load_image(e.image)
            rows.append({"camera": e.id, **_image_metrics(render(ckpt.gaussians, e.camera), gt)})
    mean = {k: float(np.mean([r[k] for r in rows])) for k in ("psnr", "ssim")}
    if args.json:
        print(json.dumps({"rows": rows, "mean": mean}, sort_keys=True), file=out)
        return
    for r in rows:
        label = r.get("camera", r.get("image"))
        print(f"{label}\tPSNR {_fmt_psnr(r['psnr'])}\tSSIM {r['ssim']:.6f}", file=out)
    if len(rows) > 1:
        print(f"mean\tPSNR {_fmt_psnr(mean['psnr'])}\tSSIM {mean['ssim']:.6f}", file=out)


def cmd_sh_variance(args, out):
    ckpt = load_checkpoint(args.checkpoint)
    report = sh_variance_report(ckpt.gaussians)
    if args.json:
        print(json.dumps({"degree": list(range(len(report))), "variance": report.tolist()}),
              file=out)
        return
    print("degree\tvariance", file=out)
    for d, v in enumerate(report):
        # repr keeps exact zeros visible as 0.0
        print(f"{d}\t{float(v)!r}", file=out)


COMMANDS = {
    "init": cmd_init,
    "train": cmd_train,
    "render": cmd_render,
    "superres": cmd_superres,
    "metrics": cmd_metrics,
    "sh-variance": cmd_sh_variance,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help().rstrip())
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args, out)
    except (SplatError, OSError, ValueError) as e:
        print(f"splatlab {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
