"""Coarse-to-fine optimization of the tiled video against all input views.

Each pyramid level resamples the tiles and the input videos to the level
scale, then repeatedly renders all T frames of a random window in a random
view and takes an Adam step on the looping loss (plus an optional total
variation term on loop-tile frames). Only loop-tile texels move; static
tiles and tile labels are frozen after culling.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import area_downsample, resize_bilinear
from .looping import PatchConfig, looping_loss
from .mtv import (
    Mtv,
    Tile,
    TileLabel,
    gather_tile_grads,
    materialize_frame,
)
from .renderer import RenderWindow, prepare_window_warp, render_planes, \
    render_planes_backward
from .scene_io import ViewRecord
from .stage1 import AdamState, adam_step, tv_loss_grad


@dataclass
class PyramidSchedule:
    coarsest_scale: float = 0.24
    growth: float = 1.4
    epochs_per_level: int = 50

    def __post_init__(self):
        if not (0 < self.coarsest_scale <= 1.0):
            raise ValueError("coarsest scale must be in (0, 1]")
        if self.growth <= 1.0:
            raise ValueError("growth factor must be > 1")

    @classmethod
    def desk(cls, **overrides) -> "PyramidSchedule":
        args = dict(epochs_per_level=12)
        args.update(overrides)
        return cls(**args)


def build_schedule(cfg: PyramidSchedule) -> list[float]:
    """Geometric scale ladder clamped so the last entry is exactly 1.0."""
    scales = []
    s = cfg.coarsest_scale
    while s < 1.0 - 1e-12:
        scales.append(s)
        s *= cfg.growth
    scales.append(1.0)
    return scales


@dataclass
class Stage2Config:
    lr: float = 0.03
    lr_decay: float = 1.0       # per-level multiplier on the learning rate
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    windows_per_view: int = 8
    window: tuple[int, int] = (180, 320)
    tv_enabled: bool = True
    tv_weight: float = 0.5
    seed: int = 0
    dtype: str = "float32"

    @classmethod
    def desk(cls, **overrides) -> "Stage2Config":
        args = dict(windows_per_view=2, window=(45, 80))
        args.update(overrides)
        return cls(**args)


@dataclass
class Stage2Result:
    mtv: Mtv
    history: list[dict] = field(default_factory=list)  # level/epoch/iteration/loss


def _level_mtv(original: Mtv, current: Mtv, level_ts: int, dtype) -> Mtv:
    """The tiled video for one pyramid level.

    Loop tiles are resampled progressively from the current (optimized)
    level so coarse results seed the finer ones; static tiles are always
    resampled directly from the stage-1 originals, so they never accumulate
    resampling loss and the finest level keeps them bit-exact.
    """
    tiles = []
    by_key = {t.key: t for t in original.tiles}
    for tile in current.tiles:
        if tile.label == TileLabel.STATIC:
            src = by_key[tile.key].static_patch
            if level_ts == original.tile_size:
                patch = src.copy()
            else:
                patch = resize_bilinear(src, (level_ts, level_ts))
            tiles.append(Tile(tile.plane, tile.row, tile.col, tile.label,
                              static_patch=patch.astype(dtype)))
        else:
            if level_ts == current.tile_size:
                seq = tile.loop_patch.copy()
            else:
                seq = np.stack([resize_bilinear(fr, (level_ts, level_ts))
                                for fr in tile.loop_patch])
            tiles.append(Tile(tile.plane, tile.row, tile.col, tile.label,
                              loop_patch=np.ascontiguousarray(seq, dtype=dtype)))
    return Mtv(tiles=tiles, stack=current.stack, tile_size=level_ts,
               num_frames=current.num_frames, grid=current.grid,
               base_tile_size=current.base_tile_size)


def _scaled_views(views: Sequence[ViewRecord], scale: float, dtype,
                  min_dim: int = 1):
    """Per-view (camera, frames) resampled to the level scale (area average).

    min_dim keeps tiny views at least as large as the spatial patch.
    """
    scaled = []
    for view in views:
        h = max(min_dim, int(round(view.camera.height * scale)))
        w = max(min_dim, int(round(view.camera.width * scale)))
        if (h, w) == (view.camera.height, view.camera.width):
            frames = view.clip.frames.astype(dtype)
            camera = view.camera
        else:
            frames = np.stack([area_downsample(f, (h, w))
                               for f in view.clip.frames]).astype(dtype)
            camera = view.camera.resized(w, h)
        scaled.append((camera, frames))
    return scaled


def train_stage2(mtv: Mtv, views: Sequence[ViewRecord],
                 schedule: PyramidSchedule | Sequence[float],
                 patch_cfg: PatchConfig, cfg: Stage2Config) -> Stage2Result:
    """Pyramid training of loop-tile texels; deterministic given the seed."""
    if isinstance(schedule, PyramidSchedule):
        epochs_per_level = schedule.epochs_per_level
        scales = build_schedule(schedule)
    else:
        scales = list(schedule)
        epochs_per_level = 50
    if not mtv.loop_tiles():
        return Stage2Result(mtv=copy.deepcopy(mtv), history=[])

    dtype = np.dtype(cfg.dtype)
    rng = np.random.default_rng(cfg.seed)
    history: list[dict] = []
    base_ts = mtv.base_tile_size
    current = mtv
    win_h0, win_w0 = cfg.window
    spatial_k = patch_cfg.spatial

    for level, scale in enumerate(scales):
        level_lr = cfg.lr * (cfg.lr_decay ** level)
        level_ts = max(2, int(round(base_ts * scale)))
        current = _level_mtv(mtv, current, level_ts, dtype)
        exact_scale = level_ts / base_ts
        loop_tiles = current.loop_tiles()
        params = [tile.loop_patch for tile in loop_tiles]
        state = AdamState(params)
        scaled = _scaled_views(views, exact_scale, dtype, min_dim=spatial_k)
        stack = current.current_stack()
        plane_shape = current.plane_shape()
        t_frames = current.num_frames
        n_loop = len(loop_tiles)

        iteration = 0
        for epoch in range(epochs_per_level):
            for _ in range(len(views) * cfg.windows_per_view):
                vi = int(rng.integers(len(scaled)))
                camera, frames = scaled[vi]
                vh, vw = camera.height, camera.width
                h = min(max(spatial_k, int(round(win_h0 * exact_scale))), vh)
                w = min(max(spatial_k, int(round(win_w0 * exact_scale))), vw)
                row = int(rng.integers(vh - h + 1))
                col = int(rng.integers(vw - w + 1))
                window = RenderWindow(view=camera, origin=(row, col), size=(h, w))
                grids = prepare_window_warp(stack, window, plane_shape)

                rendered = np.empty((t_frames, h, w, 3), dtype=dtype)
                caches = []
                for t in range(t_frames):
                    planes_t = materialize_frame(current, t, dtype=dtype)
                    out, cache = render_planes(planes_t, grids, want_cache=True)
                    rendered[t] = out
                    caches.append(cache)

                target = frames[:, row:row + h, col:col + w]
                result = looping_loss(rendered, target, patch_cfg)
                loss = result.loss

                grads = [np.zeros_like(p) for p in params]
                for t in range(t_frames):
                    d_planes = render_planes_backward(caches[t],
                                                      result.grad[t])
                    for g, tile_grad in zip(grads,
                                            gather_tile_grads(current, d_planes)):
                        g[t] += tile_grad
                if cfg.tv_enabled and n_loop:
                    tv_norm = cfg.tv_weight / (n_loop * t_frames)
                    for p, g in zip(params, grads):
                        tv_val, tv_grad = tv_loss_grad(p)
                        loss += tv_norm * tv_val
                        g += tv_norm * tv_grad
                adam_step(params, grads, state, lr=level_lr, beta1=cfg.beta1,
                          beta2=cfg.beta2, eps=cfg.eps)
                history.append({"level": level, "epoch": epoch,
                                "iteration": iteration, "loss": float(loss)})
                iteration += 1
    return Stage2Result(mtv=current, history=history)


def history_to_csv(history: list[dict]) -> str:
    lines = ["level,epoch,iteration,loss"]
    for row in history:
        lines.append(f"{row['level']},{row['epoch']},{row['iteration']},"
                     f"{row['loss']:.8g}")
    return "\n".join(lines) + "\n"
