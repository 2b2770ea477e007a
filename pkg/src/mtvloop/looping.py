"""Patch-based looping objective.

A rendered T-frame window, treated as infinitely repeating, is compared
against the input clip through per-pixel sets of 3D spatio-temporal
patches. Circularly padding the first p = s - d rendered frames at the end
of the video makes the finite patch set equivalent to the patch set of the
repeating video, so patches straddling the loop seam take part in the loss.

Matching uses normalized similarity scores

    s_ij = |Q_i - K_j|^2 / (rho + min_k |Q_k - K_j|^2)

whose denominator rewards selecting targets that no source patch sits close
to yet: rho = 0 maximizes completeness, rho -> inf reduces to plain nearest
neighbor. The loss is the mean squared error between each source patch and
its selected target, with the selection treated as fixed by the gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

DENOM_FLOOR = 1e-12


@dataclass(frozen=True)
class PatchConfig:
    """3D patch geometry: spatial k x k, temporal size s, temporal stride d."""

    spatial: int = 11
    temporal_size: int = 3
    temporal_stride: int = 1
    rho: float = 0.0
    pad: bool = True

    def __post_init__(self):
        if self.spatial < 1 or self.spatial % 2 == 0:
            raise ValueError("spatial size must be odd and positive")
        if self.temporal_size < 1:
            raise ValueError("temporal size must be >= 1")
        if not (1 <= self.temporal_stride <= self.temporal_size):
            raise ValueError("temporal stride must be in [1, temporal_size]")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")

    @property
    def pad_frames(self) -> int:
        return self.temporal_size - self.temporal_stride

    @classmethod
    def desk(cls, **overrides) -> "PatchConfig":
        args = dict(spatial=5)
        args.update(overrides)
        return cls(**args)


@dataclass
class PatchSet:
    """Flattened 3D patches extracted at one pixel center."""

    patches: np.ndarray   # (n, k*k*s*C)
    offsets: list[int]    # temporal start frame of each patch

    def __post_init__(self):
        if self.patches.ndim != 2 or self.patches.shape[0] < 1:
            raise ValueError("patch set must be a non-empty (n, dim) array")
        if len(self.offsets) != self.patches.shape[0]:
            raise ValueError("offsets must match patch count")


def circular_pad(video: np.ndarray, config: PatchConfig) -> np.ndarray:
    """Append the first p = s - d frames at the end of the video."""
    p = config.pad_frames
    return np.concatenate([video, video[:p]], axis=0)


def temporal_starts(num_frames: int, config: PatchConfig) -> list[int]:
    s, d = config.temporal_size, config.temporal_stride
    if num_frames < s:
        raise ValueError(f"video of {num_frames} frames shorter than patch size {s}")
    return list(range(0, num_frames - s + 1, d))


def extract_temporal_patches(video: np.ndarray, config: PatchConfig,
                             pixel: tuple[int, int]) -> PatchSet:
    """All temporal patches centered at one pixel (valid-mode spatial window).

    Patches start at frames 0, d, 2d, ... while they fit; each is the
    k x k x s x C sub-block flattened in (t, y, x, channel) order.
    """
    k = config.spatial
    half = k // 2
    row, col = pixel
    frames, height, width = video.shape[:3]
    if not (half <= row < height - half and half <= col < width - half):
        raise ValueError("spatial window does not fit at this pixel")
    starts = temporal_starts(frames, config)
    s = config.temporal_size
    patches = np.stack([
        video[t:t + s, row - half:row + half + 1, col - half:col + half + 1]
        .reshape(-1)
        for t in starts
    ])
    return PatchSet(patches=patches, offsets=starts)


def nss_table(q_patches, k_patches, rho: float = 0.0) -> np.ndarray:
    """Normalized similarity scores between two patch sets.

    Accepts PatchSet or raw (n, dim) arrays. The denominator is floored at
    1e-12 so exact matches (common with rho = 0) stay finite. rho = inf is
    supported as the plain nearest-neighbor limit: the returned table is
    then the raw squared-distance table, which has the same row argmins.
    """
    q = q_patches.patches if isinstance(q_patches, PatchSet) else np.asarray(q_patches)
    k = k_patches.patches if isinstance(k_patches, PatchSet) else np.asarray(k_patches)
    if q.shape[1] != k.shape[1]:
        raise ValueError("patch dimensionalities differ")
    diff = q[:, None, :] - k[None, :, :]
    dist = np.einsum("ijd,ijd->ij", diff, diff)
    if np.isinf(rho):
        return dist
    denom = np.maximum(rho + dist.min(axis=0, keepdims=True), DENOM_FLOOR)
    return dist / denom


def select_pnn(table: np.ndarray) -> np.ndarray:
    """Row-wise argmin; ties break to the smallest column index."""
    if not np.all(np.isfinite(table)):
        raise ValueError("similarity table contains non-finite values")
    return np.argmin(table, axis=1)


# ---------------------------------------------------------------------------
# batched path used by the training loop


def patch_tensor(video: np.ndarray, config: PatchConfig):
    """Patches at every valid pixel center at once.

    Returns (starts, arr) with arr of shape (Hc, Wc, n, k*k*s*C); flattening
    order matches extract_temporal_patches.
    """
    k = config.spatial
    s = config.temporal_size
    starts = temporal_starts(video.shape[0], config)
    frames, height, width, chans = video.shape
    if height < k or width < k:
        raise ValueError("frame smaller than the spatial patch")
    win = np.lib.stride_tricks.sliding_window_view(video, (s, k, k), axis=(0, 1, 2))
    # win: (F-s+1, Hc, Wc, C, s, k, k) -> (n, Hc, Wc, s, k, k, C)
    win = np.moveaxis(win[starts], 3, -1)
    n = len(starts)
    hc, wc = height - k + 1, width - k + 1
    arr = np.ascontiguousarray(win).reshape(n, hc, wc, -1)
    return starts, np.moveaxis(arr, 0, 2)


def _pairwise_sq_dists(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Batched squared distances: (P, n, dim) x (P, m, dim) -> (P, n, m)."""
    q_sq = np.einsum("pnd,pnd->pn", q, q)
    k_sq = np.einsum("pmd,pmd->pm", k, k)
    cross = q @ np.swapaxes(k, 1, 2)
    dist = q_sq[:, :, None] + k_sq[:, None, :] - 2.0 * cross
    return np.maximum(dist, 0.0)


@dataclass
class LoopingLossResult:
    loss: float
    grad: np.ndarray                 # same shape as the rendered video
    selection: np.ndarray            # (Hc, Wc, n) chosen target indices
    num_source_patches: int


def looping_loss(rendered: np.ndarray, input_video: np.ndarray,
                 config: PatchConfig,
                 frozen_selection: Optional[np.ndarray] = None) -> LoopingLossResult:
    """Loss and exact gradient of the patch matching over all pixel centers.

    The gradient treats the selection as fixed and flows through every
    occurrence of each rendered texel, including its circularly padded
    copies. Passing frozen_selection skips the matching step and reuses a
    previous selection (useful for finite-difference checks).
    """
    t_frames, height, width, chans = rendered.shape
    k = config.spatial
    s = config.temporal_size
    if height < k or width < k:
        raise ValueError("window smaller than the spatial patch size")
    if input_video.shape[1:3] != (height, width):
        raise ValueError("rendered/input spatial dimensions differ")
    pad = config.pad_frames if config.pad else 0
    padded = np.concatenate([rendered, rendered[:pad]], axis=0)
    q_starts, q_arr = patch_tensor(padded, config)
    _, k_arr = patch_tensor(input_video, config)
    hc, wc, n, dim = q_arr.shape
    m = k_arr.shape[2]

    if frozen_selection is None:
        q_flat = q_arr.reshape(-1, n, dim)
        k_flat = k_arr.reshape(-1, m, dim)
        dist = _pairwise_sq_dists(q_flat, k_flat)
        if np.isinf(config.rho):
            table = dist
        else:
            denom = np.maximum(config.rho + dist.min(axis=1, keepdims=True),
                               DENOM_FLOOR)
            table = dist / denom
        selection = np.argmin(table, axis=2).reshape(hc, wc, n)
    else:
        selection = frozen_selection
        if selection.shape != (hc, wc, n):
            raise ValueError("frozen selection shape mismatch")

    chosen = np.take_along_axis(k_arr, selection[..., None].astype(np.int64),
                                axis=2)
    residual = q_arr - chosen
    norm = n * hc * wc
    loss = float(np.sum(residual * residual) / norm)

    # fold patch gradients back onto the padded video, then unpad
    d_patches = (2.0 / norm) * residual
    d_patches = d_patches.reshape(hc, wc, n, s, k, k, chans)
    d_padded = np.zeros_like(padded)
    for i, t0 in enumerate(q_starts):
        for dt in range(s):
            frame = t0 + dt
            for dy in range(k):
                for dx in range(k):
                    d_padded[frame, dy:dy + hc, dx:dx + wc] += \
                        d_patches[:, :, i, dt, dy, dx]
    d_rendered = d_padded[:t_frames]
    if pad:
        d_rendered[:pad] += d_padded[t_frames:]
    return LoopingLossResult(loss=loss, grad=d_rendered, selection=selection,
                             num_source_patches=n)
