"""Differentiable rendering of plane stacks and tiled videos.

A plane volume is warped into a target window plane by plane and blended
back to front with the over operator (straight, non-premultiplied alpha):

    out = color * alpha + out_behind * (1 - alpha)

The forward pass can record warp coordinates and per-plane running
composites so the backward pass is a single reverse sweep that produces
exact gradients with respect to every contributing RGBA texel (and the
loopable volume when it is rendered).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    CameraModel,
    PlaneStack,
    SampleGrid,
    homography_grid,
    plane_homography,
    translation_homography,
)


@dataclass
class Mpi:
    """Dense plane-sweep volume: D RGBA planes at the stack's depths.

    Plane textures may be padded beyond the reference camera's image (extra
    texels continue the pixel grid; padding carries alpha 0).
    """

    planes: np.ndarray  # (D, H, W, 4), RGB + straight alpha, all in [0, 1]
    stack: PlaneStack

    def __post_init__(self):
        if self.planes.ndim != 4 or self.planes.shape[-1] != 4:
            raise ValueError("planes must have shape (D, H, W, 4)")
        if self.planes.shape[0] != self.stack.num_planes:
            raise ValueError("plane count does not match stack")
        ref = self.stack.reference
        if self.planes.shape[1] < ref.height or self.planes.shape[2] < ref.width:
            raise ValueError("planes smaller than the reference image")

    @property
    def num_planes(self) -> int:
        return self.planes.shape[0]

    @property
    def shape(self):
        return self.planes.shape


@dataclass
class LoopableVolume:
    """Per-texel loop potential in [0, 1]; rendered with the paired Mpi's alpha."""

    values: np.ndarray  # (D, H, W)

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("loopable volume must have shape (D, H, W)")


@dataclass(frozen=True)
class RenderWindow:
    """Axis-aligned pixel window inside a view."""

    view: CameraModel
    origin: tuple[int, int] = (0, 0)   # (row, col)
    size: Optional[tuple[int, int]] = None  # (h, w); None = full image

    def __post_init__(self):
        if self.size is None:
            object.__setattr__(self, "size", (self.view.height, self.view.width))
        r, c = self.origin
        h, w = self.size
        if h < 1 or w < 1:
            raise ValueError("window size must be positive")
        if r < 0 or c < 0 or r + h > self.view.height or c + w > self.view.width:
            raise ValueError("window outside image bounds")


class RenderCache:
    """Forward-pass records needed for the exact backward sweep."""

    def __init__(self, grids, warped, behind, plane_shape, num_color, has_loop):
        self.grids: list[SampleGrid] = grids
        self.warped = warped            # (D, h, w, C+1), C colors + alpha
        self.behind = behind            # (D, h, w, C) composite behind each plane
        self.plane_shape = plane_shape  # (H, W)
        self.num_color = num_color      # colors excluding the loop channel
        self.has_loop = has_loop


def composite_over(warped_planes: Sequence[np.ndarray]) -> np.ndarray:
    """Blend back-to-front; planes ordered far to near, alpha last channel."""
    planes = list(warped_planes)
    if not planes:
        raise ValueError("empty plane list")
    out = np.zeros(planes[0].shape[:-1] + (planes[0].shape[-1] - 1,),
                   dtype=planes[0].dtype)
    for plane in planes:
        color = plane[..., :-1]
        alpha = plane[..., -1:]
        out = color * alpha + out * (1.0 - alpha)
    return out


def prepare_window_warp(stack: PlaneStack, window: RenderWindow,
                        plane_shape: tuple[int, int]) -> list[SampleGrid]:
    """Per-plane sample grids mapping window pixels to plane texels."""
    row0, col0 = window.origin
    offset = translation_homography(col0, row0)
    grids = []
    for depth in stack.depths:
        hom = plane_homography(stack.reference, window.view, float(depth))
        grids.append(homography_grid(hom @ offset, window.size, plane_shape))
    return grids


def render_planes(planes: np.ndarray, grids: list[SampleGrid],
                  want_cache: bool = False):
    """Warp and composite a (D, H, W, C+1) volume; returns (out, cache | None).

    The volume is stored near to far (increasing depth); compositing runs
    far to near.
    """
    num_planes = planes.shape[0]
    num_color = planes.shape[-1] - 1
    h, w = grids[0].shape
    dtype = planes.dtype
    warped = np.empty((num_planes, h, w, num_color + 1), dtype=dtype)
    for k in range(num_planes):
        warped[k] = grids[k].gather(planes[k])
    behind = np.empty((num_planes, h, w, num_color), dtype=dtype) if want_cache else None
    out = np.zeros((h, w, num_color), dtype=dtype)
    for k in range(num_planes - 1, -1, -1):
        if want_cache:
            behind[k] = out
        color = warped[k, ..., :-1]
        alpha = warped[k, ..., -1:]
        out = color * alpha + out * (1.0 - alpha)
    cache = None
    if want_cache:
        cache = RenderCache(grids, warped, behind, planes.shape[1:3],
                            num_color, has_loop=False)
    return out, cache


def render_planes_backward(cache: RenderCache, d_out: np.ndarray) -> np.ndarray:
    """Exact reverse sweep of render_planes.

    d_out has shape (h, w, C); returns gradients with respect to the input
    volume, shape (D, H, W, C+1). The alpha gradient carries both the direct
    color*alpha term and the occlusion term -out_behind.
    """
    num_planes = cache.warped.shape[0]
    h, w = cache.grids[0].shape
    if d_out.shape != (h, w, cache.num_color):
        raise ValueError("upstream gradient shape mismatch")
    d_planes = np.zeros((num_planes,) + cache.plane_shape + (cache.num_color + 1,),
                        dtype=d_out.dtype)
    grad = d_out
    # reverse of far-to-near compositing visits planes near to far
    for k in range(num_planes):
        color = cache.warped[k, ..., :-1]
        alpha = cache.warped[k, ..., -1:]
        d_color = grad * alpha
        d_alpha = np.sum(grad * (color - cache.behind[k]), axis=-1, keepdims=True)
        d_warped = np.concatenate([d_color, d_alpha], axis=-1)
        cache.grids[k].scatter_add(d_warped, d_planes[k])
        grad = grad * (1.0 - alpha)
    return d_planes


@dataclass
class RenderResult:
    rgb: np.ndarray                     # (h, w, 3)
    loop_mask: Optional[np.ndarray]     # (h, w) or None
    cache: Optional[RenderCache] = None


def render_mpi(mpi: Mpi, loopable: Optional[LoopableVolume],
               window: RenderWindow, want_cache: bool = False) -> RenderResult:
    """Warp every plane into the window's view and composite back to front.

    When a loopable volume is supplied it is composited as an extra color
    channel, sharing the per-plane alpha with the RGB pass.
    """
    if loopable is not None and loopable.values.shape != mpi.planes.shape[:3]:
        raise ValueError("loopable volume shape does not match the Mpi")
    grids = prepare_window_warp(mpi.stack, window, mpi.planes.shape[1:3])
    if loopable is None:
        volume = mpi.planes
    else:
        volume = np.concatenate(
            [mpi.planes[..., :3], loopable.values[..., None],
             mpi.planes[..., 3:]], axis=-1)
    out, cache = render_planes(volume, grids, want_cache=want_cache)
    if cache is not None:
        cache.has_loop = loopable is not None
    if loopable is None:
        return RenderResult(rgb=out, loop_mask=None, cache=cache)
    return RenderResult(rgb=out[..., :3], loop_mask=out[..., 3], cache=cache)


def render_backward(cache: RenderCache, d_rgb: np.ndarray,
                    d_loop: Optional[np.ndarray] = None):
    """Gradients of a recorded render_mpi pass.

    Returns (d_planes, d_loopable) where d_planes is (D, H, W, 4) and
    d_loopable is (D, H, W) or None. The shared alpha receives occlusion
    gradients from the loop channel as well as from RGB.
    """
    if cache.has_loop:
        if d_loop is None:
            d_loop = np.zeros(d_rgb.shape[:2], dtype=d_rgb.dtype)
        upstream = np.concatenate([d_rgb, d_loop[..., None]], axis=-1)
        d_volume = render_planes_backward(cache, upstream)
        d_planes = np.concatenate([d_volume[..., :3], d_volume[..., 4:]], axis=-1)
        return d_planes, d_volume[..., 3]
    if d_loop is not None:
        raise ValueError("loop gradient supplied but no loop channel was rendered")
    return render_planes_backward(cache, d_rgb), None


def accumulated_alpha(mpi: Mpi, window: RenderWindow) -> np.ndarray:
    """Per-pixel accumulated opacity of a rendered window.

    Runs the over recurrence on the warped alphas; telescoping makes this
    equal to 1 - prod_d (1 - alpha_d).
    """
    grids = prepare_window_warp(mpi.stack, window, mpi.planes.shape[1:3])
    acc = np.zeros(window.size, dtype=mpi.planes.dtype)
    for k in range(mpi.num_planes - 1, -1, -1):
        alpha = grids[k].gather(mpi.planes[k, ..., 3])
        acc = alpha + acc * (1.0 - alpha)
    return acc


def render_mtv(mtv, view: CameraModel, t: int,
               window: Optional[RenderWindow] = None) -> np.ndarray:
    """Render one frame of a tiled video; the time index wraps modulo T.

    Static tiles contribute their single patch, loop tiles their frame
    (t mod T) patch, absent tiles contribute alpha 0.
    """
    from .mtv import densify

    if window is None:
        window = RenderWindow(view=view)
    elif window.view is not view and window.view != view:
        raise ValueError("window.view must match the requested view")
    mpi = densify(mtv, t)
    return render_mpi(mpi, None, window).rgb
