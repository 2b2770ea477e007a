"""Training of the dense looping-aware plane volume.

Optimizes an Mpi and a LoopableVolume against per-view average images and
2D loopable masks. The objective is

    total = mse + bce + lambda_tv * tv + lambda_spa * sparsity

with exact analytic gradients through the renderer. Parameters live in
[0, 1] directly and are clamped after every Adam step (projected gradient).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, NumericError
from .geometry import CameraModel, PlaneStack, disparity_depths
from .renderer import (
    Mpi,
    LoopableVolume,
    RenderWindow,
    render_mpi,
    render_backward,
)
from .scene_io import ViewRecord

BCE_EPS = 1e-6
SPARSITY_EPS = 1e-8


@dataclass
class Stage1Config:
    lambda_tv: float = 0.5
    lambda_spa: float = 0.004
    num_planes: int = 32
    window: tuple[int, int] = (180, 320)    # (h, w)
    epochs: int = 30
    windows_per_view: int = 16
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    dtype: str = "float32"
    init_rgb: tuple[float, float] = (0.4, 0.6)
    init_alpha: float = 0.5
    init_loopable: float = 0.5

    def __post_init__(self):
        if self.lambda_tv < 0 or self.lambda_spa < 0:
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def desk(cls, **overrides) -> "Stage1Config":
        """Small-scale preset for laptop-sized experiments and tests."""
        args = dict(num_planes=8, window=(45, 80), epochs=30,
                    windows_per_view=8)
        args.update(overrides)
        return cls(**args)


class AdamState:
    """First/second moment estimates mirroring a list of parameter tensors."""

    def __init__(self, params: Sequence[np.ndarray]):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step = 0


def adam_step(params: list[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              clamp: Optional[tuple[float, float]] = (0.0, 1.0)) -> AdamState:
    """One Adam update with bias correction, in place, then clamp.

    Raises NumericError on non-finite gradients so training aborts loudly
    instead of silently corrupting the volume.
    """
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    for i, grad in enumerate(grads):
        if grad.shape != params[i].shape:
            raise ValueError("gradient shape mismatch")
        if not np.all(np.isfinite(grad)):
            raise NumericError(
                f"non-finite gradient in tensor {i} at step {state.step + 1}")
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        if clamp is not None:
            np.clip(p, clamp[0], clamp[1], out=p)
    return state


# ---------------------------------------------------------------------------
# losses


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Sum of squared differences divided by the pixel count h*w.

    Summed (not averaged) over channels, so a constant error of e across C
    channels yields C * e**2.
    """
    if pred.shape != target.shape:
        raise ValueError("shape mismatch")
    h, w = pred.shape[:2]
    diff = pred - target
    return float(np.sum(diff * diff) / (h * w))


def mse_loss_grad(pred: np.ndarray, target: np.ndarray):
    if pred.shape != target.shape:
        raise ValueError("shape mismatch")
    h, w = pred.shape[:2]
    diff = pred - target
    return float(np.sum(diff * diff) / (h * w)), (2.0 / (h * w)) * diff


def bce_loss(pred_mask: np.ndarray, target_mask: np.ndarray) -> float:
    """Mean binary cross entropy over pixels; pred clamped to [eps, 1-eps]."""
    if pred_mask.shape != target_mask.shape:
        raise ValueError("shape mismatch")
    p = np.clip(pred_mask, BCE_EPS, 1.0 - BCE_EPS)
    t = target_mask
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log1p(-p))))


def bce_loss_grad(pred_mask: np.ndarray, target_mask: np.ndarray):
    if pred_mask.shape != target_mask.shape:
        raise ValueError("shape mismatch")
    count = pred_mask.size
    inside = (pred_mask > BCE_EPS) & (pred_mask < 1.0 - BCE_EPS)
    p = np.clip(pred_mask, BCE_EPS, 1.0 - BCE_EPS)
    t = target_mask
    loss = float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log1p(-p))))
    grad = np.where(inside, (-t / p + (1.0 - t) / (1.0 - p)) / count, 0.0)
    return loss, grad


def tv_loss(planes: np.ndarray) -> float:
    """Anisotropic total variation with forward differences.

    Accepts an Mpi or a raw (D, H, W, C) array; sums the L1 norms of the x
    and y gradients over every plane and channel, normalized by H*W.
    """
    arr = planes.planes if isinstance(planes, Mpi) else planes
    h, w = arr.shape[1:3]
    dx = np.abs(arr[:, :, 1:, :] - arr[:, :, :-1, :])
    dy = np.abs(arr[:, 1:, :, :] - arr[:, :-1, :, :])
    return float((dx.sum() + dy.sum()) / (h * w))


def tv_loss_grad(planes: np.ndarray):
    arr = planes.planes if isinstance(planes, Mpi) else planes
    h, w = arr.shape[1:3]
    dx = arr[:, :, 1:, :] - arr[:, :, :-1, :]
    dy = arr[:, 1:, :, :] - arr[:, :-1, :, :]
    loss = float((np.abs(dx).sum() + np.abs(dy).sum()) / (h * w))
    grad = np.zeros_like(arr)
    sx = np.sign(dx) / (h * w)
    sy = np.sign(dy) / (h * w)
    grad[:, :, 1:, :] += sx
    grad[:, :, :-1, :] -= sx
    grad[:, 1:, :, :] += sy
    grad[:, :-1, :, :] -= sy
    return loss, grad


def sparsity_loss(alpha: np.ndarray) -> float:
    """Mean L1/L2 ratio of the per-pixel vector of D alpha values.

    The ratio is 1 for a one-hot vector (its minimum) and sqrt(D) for a
    uniform one; pixels with near-zero L2 norm contribute 0.
    """
    h, w = alpha.shape[1:3]
    l1 = np.sum(np.abs(alpha), axis=0)
    l2 = np.sqrt(np.sum(alpha * alpha, axis=0))
    ratio = np.where(l2 >= SPARSITY_EPS, l1 / np.maximum(l2, SPARSITY_EPS), 0.0)
    return float(ratio.sum() / (h * w))


def sparsity_loss_grad(alpha: np.ndarray):
    h, w = alpha.shape[1:3]
    l1 = np.sum(np.abs(alpha), axis=0)
    l2 = np.sqrt(np.sum(alpha * alpha, axis=0))
    ok = l2 >= SPARSITY_EPS
    l2s = np.maximum(l2, SPARSITY_EPS)
    ratio = np.where(ok, l1 / l2s, 0.0)
    loss = float(ratio.sum() / (h * w))
    # d(l1/l2)/da_i = sign(a_i)/l2 - l1 * a_i / l2**3
    grad = np.where(ok[None], np.sign(alpha) / l2s[None]
                    - (l1 / l2s ** 3)[None] * alpha, 0.0) / (h * w)
    return loss, grad.astype(alpha.dtype, copy=False)


@dataclass
class Stage1LossTerms:
    mse: float = 0.0
    bce: float = 0.0
    tv: float = 0.0
    sparsity: float = 0.0


def stage1_total(terms: Stage1LossTerms, lambda_tv: float = 0.5,
                 lambda_spa: float = 0.004) -> float:
    """Weighted sum of the four first-stage losses."""
    return terms.mse + terms.bce + lambda_tv * terms.tv + lambda_spa * terms.sparsity


def stage1_loss_and_grads(mpi: Mpi, loopable: LoopableVolume,
                          window: RenderWindow, target_rgb: np.ndarray,
                          target_mask: np.ndarray, config: Stage1Config):
    """Total windowed loss and exact gradients w.r.t. the Mpi and volume."""
    result = render_mpi(mpi, loopable, window, want_cache=True)
    l_mse, d_rgb = mse_loss_grad(result.rgb, target_rgb)
    l_bce, d_mask = bce_loss_grad(result.loop_mask, target_mask)
    d_planes, d_loop = render_backward(result.cache, d_rgb, d_mask)
    l_tv, d_tv = tv_loss_grad(mpi.planes)
    l_spa, d_spa = sparsity_loss_grad(mpi.planes[..., 3])
    d_planes += config.lambda_tv * d_tv
    d_planes[..., 3] += config.lambda_spa * d_spa
    terms = Stage1LossTerms(mse=l_mse, bce=l_bce, tv=l_tv, sparsity=l_spa)
    total = stage1_total(terms, config.lambda_tv, config.lambda_spa)
    return total, terms, d_planes, d_loop


def choose_reference_view(cameras: Sequence[CameraModel]) -> int:
    """Index of the camera closest to the centroid of all camera centers."""
    centers = np.stack([c.center() for c in cameras])
    centroid = centers.mean(axis=0)
    return int(np.argmin(np.linalg.norm(centers - centroid, axis=1)))


def init_parameters(stack: PlaneStack, config: Stage1Config,
                    rng: np.random.Generator):
    dtype = np.dtype(config.dtype)
    ref = stack.reference
    shape = (stack.num_planes, ref.height, ref.width)
    planes = np.empty(shape + (4,), dtype=dtype)
    lo, hi = config.init_rgb
    planes[..., :3] = rng.uniform(lo, hi, size=shape + (3,))
    planes[..., 3] = config.init_alpha
    loopable = np.full(shape, config.init_loopable, dtype=dtype)
    return planes, loopable


@dataclass
class Stage1Result:
    mpi: Mpi
    loopable: LoopableVolume
    loss_history: list[dict] = field(default_factory=list)


def train_stage1(views: Sequence[ViewRecord], config: Stage1Config,
                 near: float, far: float,
                 reference_index: Optional[int] = None) -> Stage1Result:
    """Optimize the dense volume against average images and 2D loop masks.

    Each iteration samples a view and a window uniformly, renders, and takes
    one Adam step on the weighted loss. Deterministic for a fixed seed.
    """
    if len(views) < 2:
        raise ValueError("need at least 2 views")
    if reference_index is None:
        reference_index = choose_reference_view([v.camera for v in views])
    ref_cam = views[reference_index].camera
    depths = disparity_depths(near, far, config.num_planes)
    stack = PlaneStack(depths=depths, reference=ref_cam)
    rng = np.random.default_rng(config.seed)
    planes, loop_values = init_parameters(stack, config, rng)
    state = AdamState([planes, loop_values])
    dtype = planes.dtype
    win_h, win_w = config.window
    history: list[dict] = []

    for epoch in range(config.epochs):
        epoch_terms = []
        for _ in range(len(views) * config.windows_per_view):
            vi = int(rng.integers(len(views)))
            view = views[vi]
            vh, vw = view.camera.height, view.camera.width
            h = min(win_h, vh)
            w = min(win_w, vw)
            row = int(rng.integers(vh - h + 1))
            col = int(rng.integers(vw - w + 1))
            window = RenderWindow(view=view.camera, origin=(row, col),
                                  size=(h, w))
            target_rgb = view.average_image[row:row + h, col:col + w].astype(dtype)
            target_mask = view.loopable_mask2d[row:row + h, col:col + w].astype(dtype)
            mpi = Mpi(planes=planes, stack=stack)
            loopable = LoopableVolume(values=loop_values)
            total, terms, d_planes, d_loop = stage1_loss_and_grads(
                mpi, loopable, window, target_rgb, target_mask, config)
            adam_step([planes, loop_values], [d_planes, d_loop], state,
                      lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                      eps=config.eps)
            epoch_terms.append((total, terms))
        mean_total = float(np.mean([t for t, _ in epoch_terms]))
        history.append({
            "epoch": epoch,
            "total": mean_total,
            "mse": float(np.mean([tm.mse for _, tm in epoch_terms])),
            "bce": float(np.mean([tm.bce for _, tm in epoch_terms])),
            "tv": float(np.mean([tm.tv for _, tm in epoch_terms])),
            "sparsity": float(np.mean([tm.sparsity for _, tm in epoch_terms])),
        })
    return Stage1Result(
        mpi=Mpi(planes=planes, stack=stack),
        loopable=LoopableVolume(values=loop_values),
        loss_history=history,
    )


# ---------------------------------------------------------------------------
# checkpoint io
#
# Byte layout (little endian):
#   bytes 0..7    magic b"MTVMPI\x00\x01"
#   bytes 8..11   uint32 header length N
#   bytes 12..N+11  UTF-8 JSON header {"version": 1, "num_planes", "height",
#                 "width", "depths": [...], "camera": {...},
#                 "has_loopable": bool}
#   then          planes as float32, C order, shape (D, H, W, 4)
#   then          loopable volume as float32, shape (D, H, W), if present

MPI_MAGIC = b"MTVMPI\x00\x01"


def save_stage1_checkpoint(path, mpi: Mpi, loopable: Optional[LoopableVolume],
                           sidecar: Optional[dict] = None) -> None:
    path = Path(path)
    header = {
        "version": 1,
        "num_planes": int(mpi.planes.shape[0]),
        "height": int(mpi.planes.shape[1]),
        "width": int(mpi.planes.shape[2]),
        "depths": [float(d) for d in mpi.stack.depths],
        "camera": mpi.stack.reference.to_json(),
        "has_loopable": loopable is not None,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MPI_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(mpi.planes, dtype="<f4").tobytes())
        if loopable is not None:
            fh.write(np.ascontiguousarray(loopable.values, dtype="<f4").tobytes())
    if sidecar is not None:
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))


def load_stage1_checkpoint(path, dtype: str = "float32"):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:8] != MPI_MAGIC:
        raise DataError(f"{path}: not a stage-1 checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt header: {exc}") from exc
    if header.get("version") != 1:
        raise DataError(f"{path}: unsupported version {header.get('version')!r}")
    d, h, w = header["num_planes"], header["height"], header["width"]
    offset = 12 + hlen
    n_mpi = d * h * w * 4
    planes = np.frombuffer(raw, dtype="<f4", count=n_mpi, offset=offset)
    if planes.size != n_mpi:
        raise DataError(f"{path}: truncated payload")
    planes = planes.reshape(d, h, w, 4).astype(dtype)
    loopable = None
    if header["has_loopable"]:
        off2 = offset + n_mpi * 4
        vol = np.frombuffer(raw, dtype="<f4", count=d * h * w, offset=off2)
        if vol.size != d * h * w:
            raise DataError(f"{path}: truncated loopable payload")
        loopable = LoopableVolume(values=vol.reshape(d, h, w).astype(dtype))
    camera = CameraModel.from_json(header["camera"])
    stack = PlaneStack(depths=np.array(header["depths"]), reference=camera)
    return Mpi(planes=planes, stack=stack), loopable, header
