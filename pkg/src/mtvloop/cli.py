"""Command-line driver: prepare -> stage1 -> cull -> stage2 -> render /
eval / export, with reproducible configs.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import atlas as atlas_mod
from . import scene_io
from .config import (
    PRESETS,
    RunConfig,
    config_to_json,
    desk_config,
    load_config,
    save_config,
)
from .errors import DataError, NumericError
from .metrics import evaluate_pair
from .mtv import build_mtv, count_params, dense_param_count, load_mtv, \
    save_mtv
from .renderer import render_mtv
from .stage1 import load_stage1_checkpoint, save_stage1_checkpoint, train_stage1
from .stage2 import history_to_csv, train_stage2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_common(p):
    p.add_argument("--config", help="run-config JSON file")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="named preset (desk or paper)")
    p.add_argument("--seed", type=int, help="override the top-level seed")


def _resolve_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    elif getattr(args, "preset", None):
        cfg = PRESETS[args.preset]()
    else:
        cfg = desk_config()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg.reseeded()


def build_parser() -> _Parser:
    parser = _Parser(prog="mtvloop",
                     description="3D looping video construction and rendering")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="write average images and loop masks")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("stage1", help="train the dense looping-aware volume")
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--holdout", help="view name excluded from training")
    _add_common(p)

    p = sub.add_parser("cull", help="tile, classify and cull a trained volume")
    p.add_argument("--mpi", required=True, help="stage-1 checkpoint")
    p.add_argument("--out", required=True, help="tiled-video checkpoint path")
    p.add_argument("--tau-alpha", type=float)
    p.add_argument("--tau-loopable", type=float)
    _add_common(p)

    p = sub.add_parser("stage2", help="pyramid training of the looping tiles")
    p.add_argument("dataset")
    p.add_argument("--mtv", required=True, help="culled checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--holdout", help="view name excluded from training")
    p.add_argument("--no-pad", action="store_true",
                   help="disable circular padding (ablation)")
    p.add_argument("--loss-csv", help="write per-iteration losses as CSV")
    _add_common(p)

    p = sub.add_parser("render", help="render a camera path to PNG frames")
    p.add_argument("--mtv", required=True)
    p.add_argument("--path", required=True, help="camera path JSON")
    p.add_argument("--frames", default="0:50", help="range start:stop")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("eval", help="metrics against a held-out view")
    p.add_argument("dataset")
    p.add_argument("--mtv", required=True)
    p.add_argument("--holdout", help="view name (default: last by name)")
    p.add_argument("--out", help="write the report as JSON")
    _add_common(p)

    p = sub.add_parser("export", help="pack a tiled video into an atlas bundle")
    p.add_argument("--mtv", required=True)
    p.add_argument("--out", required=True, help="bundle directory")
    _add_common(p)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--holdout", help="view name (default: last by name)")
    p.add_argument("--resume", action="store_true",
                   help="skip stages whose checkpoints already exist")
    p.add_argument("--no-pad", action="store_true",
                   help="disable circular padding (ablation)")
    _add_common(p)
    return parser


def _load_views(dataset, holdout=None):
    views = scene_io.load_dataset(dataset)
    meta = scene_io.load_scene_meta(Path(dataset))
    if holdout is None:
        holdout = views[-1].name
    train = [v for v in views if v.name != holdout]
    held = [v for v in views if v.name == holdout]
    if not held:
        raise DataError(f"holdout view {holdout!r} not found in the dataset")
    if len(train) < 2:
        raise DataError("fewer than 2 training views after holdout split")
    return train, held[0], meta


def cmd_prepare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    views = scene_io.load_dataset(args.dataset)
    for view in views:
        scene_io.save_frame_png(out / f"{view.name}_average.png",
                                view.average_image)
        Image.fromarray(view.loopable_mask2d * 255).save(
            out / f"{view.name}_mask.png")
    print(f"prepared {len(views)} views -> {out}")
    return 0


def cmd_stage1(args) -> int:
    cfg = _resolve_config(args)
    train, held, meta = _load_views(args.dataset,
                                    getattr(args, "holdout", None)
                                    or cfg.holdout_view)
    result = train_stage1(train, cfg.stage1, near=meta.near, far=meta.far)
    sidecar = {"config": config_to_json(cfg), "holdout": held.name,
               "loss_history": result.loss_history}
    save_stage1_checkpoint(args.out, result.mpi, result.loopable, sidecar)
    print(f"stage1 finished: {args.out} "
          f"(final loss {result.loss_history[-1]['total']:.4f})"
          if result.loss_history else f"stage1 finished: {args.out}")
    return 0


def cmd_cull(args) -> int:
    cfg = _resolve_config(args)
    cull = cfg.culling
    if args.tau_alpha is not None:
        cull = dataclasses.replace(cull, tau_alpha=args.tau_alpha)
    if args.tau_loopable is not None:
        cull = dataclasses.replace(cull, tau_loopable=args.tau_loopable)
    mpi, loopable, _ = load_stage1_checkpoint(args.mpi)
    if cull.tau_alpha <= 0.0:
        print("warning: tau_alpha <= 0, nothing will be culled "
              "(dense fallback)", file=sys.stderr)
    mtv = build_mtv(mpi, loopable, tile_size=cull.tile_size,
                    num_frames=cull.num_frames, tau_alpha=cull.tau_alpha,
                    tau_loop=cull.tau_loopable, noise_amp=cull.noise_amp,
                    seed=cull.seed)
    save_mtv(args.out, mtv)
    print(f"culled: {len(mtv.tiles)} tiles kept, "
          f"{count_params(mtv)} / {dense_param_count(mtv)} parameters "
          f"({100.0 * count_params(mtv) / dense_param_count(mtv):.1f}% of dense)")
    return 0


def cmd_stage2(args) -> int:
    cfg = _resolve_config(args)
    train, _, _ = _load_views(args.dataset,
                              getattr(args, "holdout", None) or cfg.holdout_view)
    mtv = load_mtv(args.mtv)
    patch = cfg.patch
    if getattr(args, "no_pad", False):
        patch = dataclasses.replace(patch, pad=False)
    result = train_stage2(mtv, train, cfg.pyramid, patch, cfg.stage2)
    save_mtv(args.out, result.mtv)
    if getattr(args, "loss_csv", None):
        Path(args.loss_csv).write_text(history_to_csv(result.history))
    last = result.history[-1]["loss"] if result.history else float("nan")
    print(f"stage2 finished: {args.out} (final loss {last:.5f})")
    return 0


def _load_camera_path(path) -> list:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read camera path {path}: {exc}") from exc
    if obj.get("format") != "mtvloop-campath/1":
        raise DataError(f"{path}: unsupported camera path format")
    cams = [scene_io.CameraModel.from_json(c) for c in obj.get("cameras", [])]
    if not cams:
        raise DataError(f"{path}: empty camera path")
    return cams


def cmd_render(args) -> int:
    mtv = load_mtv(args.mtv)
    cameras = _load_camera_path(args.path)
    try:
        start, stop = (int(x) for x in args.frames.split(":"))
    except ValueError as exc:
        raise _UsageError(f"bad --frames range {args.frames!r}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"format": "mtvloop-render/1", "frames": []}
    for t in range(start, stop):
        cam = cameras[min(t - start, len(cameras) - 1)]
        rgb = render_mtv(mtv, cam, t)
        name = f"render_{t:04d}.png"
        scene_io.save_frame_png(out / name, rgb)
        manifest["frames"].append({"t": t, "file": name,
                                   "camera": min(t - start, len(cameras) - 1)})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"rendered {stop - start} frames -> {out}")
    return 0


def render_view_video(mtv, camera) -> np.ndarray:
    frames = [render_mtv(mtv, camera, t) for t in range(mtv.num_frames)]
    return np.stack(frames)


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    _, held, _ = _load_views(args.dataset,
                             getattr(args, "holdout", None) or cfg.holdout_view)
    mtv = load_mtv(args.mtv)
    synthetic = render_view_video(mtv, held.camera)
    report = evaluate_pair(synthetic, held.clip.frames,
                           cfg.metrics.patch_configs(), cfg.metrics.search())
    print(report.table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_json(), indent=2))
    return 0


def cmd_export(args) -> int:
    mtv = load_mtv(args.mtv)
    bundle = atlas_mod.pack(mtv)
    out = atlas_mod.save_bundle(bundle, args.out)
    print(f"exported bundle -> {out}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "run_config.json")
    holdout = getattr(args, "holdout", None) or cfg.holdout_view
    train, held, meta = _load_views(args.dataset, holdout)
    print(f"views: {len(train)} train, holdout {held.name}")

    mpi_ckpt = out / "stage1.mpi"
    if not (args.resume and mpi_ckpt.exists()):
        result = train_stage1(train, cfg.stage1, near=meta.near, far=meta.far)
        save_stage1_checkpoint(mpi_ckpt, result.mpi, result.loopable,
                               {"config": config_to_json(cfg),
                                "holdout": held.name,
                                "loss_history": result.loss_history})
        print(f"stage1 done -> {mpi_ckpt}")
    else:
        print(f"stage1 checkpoint found, skipping -> {mpi_ckpt}")

    mtv_init_ckpt = out / "mtv_init.mtv"
    if not (args.resume and mtv_init_ckpt.exists()):
        mpi, loopable, _ = load_stage1_checkpoint(mpi_ckpt)
        if cfg.culling.tau_alpha <= 0.0:
            print("warning: tau_alpha <= 0, nothing will be culled "
                  "(dense fallback)", file=sys.stderr)
        mtv = build_mtv(mpi, loopable, tile_size=cfg.culling.tile_size,
                        num_frames=cfg.culling.num_frames,
                        tau_alpha=cfg.culling.tau_alpha,
                        tau_loop=cfg.culling.tau_loopable,
                        noise_amp=cfg.culling.noise_amp, seed=cfg.culling.seed)
        save_mtv(mtv_init_ckpt, mtv)
        print(f"culling done -> {mtv_init_ckpt} ({len(mtv.tiles)} tiles, "
              f"{count_params(mtv)} parameters)")
    else:
        print(f"culled checkpoint found, skipping -> {mtv_init_ckpt}")

    mtv_final_ckpt = out / "mtv_final.mtv"
    if not (args.resume and mtv_final_ckpt.exists()):
        mtv = load_mtv(mtv_init_ckpt)
        patch = cfg.patch
        if getattr(args, "no_pad", False):
            patch = dataclasses.replace(patch, pad=False)
        result = train_stage2(mtv, train, cfg.pyramid, patch, cfg.stage2)
        save_mtv(mtv_final_ckpt, result.mtv)
        (out / "stage2_loss.csv").write_text(history_to_csv(result.history))
        print(f"stage2 done -> {mtv_final_ckpt}")
    else:
        print(f"final checkpoint found, skipping -> {mtv_final_ckpt}")

    mtv = load_mtv(mtv_final_ckpt)
    synthetic = render_view_video(mtv, held.camera)
    render_dir = out / "holdout_render"
    render_dir.mkdir(exist_ok=True)
    for t, frame in enumerate(synthetic):
        scene_io.save_frame_png(render_dir / f"render_{t:04d}.png", frame)
    report = evaluate_pair(synthetic, held.clip.frames,
                           cfg.metrics.patch_configs(), cfg.metrics.search())
    (out / "metrics.json").write_text(json.dumps(report.to_json(), indent=2))
    print(report.table())
    print(f"pipeline complete -> {out}")
    return 0


_COMMANDS = {
    "prepare": cmd_prepare,
    "stage1": cmd_stage1,
    "cull": cmd_cull,
    "stage2": cmd_stage2,
    "render": cmd_render,
    "eval": cmd_eval,
    "export": cmd_export,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
