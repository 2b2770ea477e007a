"""Scene ingestion: multi-view clips, cameras, average images, loop masks.

Dataset layout on disk:

    root/
      scene.json              optional: {"format": "mtvloop-scene/1",
                              "near": float, "far": float, "fps": float}
      view_00/
        camera.json           {"format": "mtvloop-camera/1", intrinsics,
                              "world_to_camera": 3x4 row-major}
        frame_0000.png        8-bit RGB frames, zero-padded indices
        frame_0001.png
      view_01/
        ...

Frames are converted to float in [0, 1] on load. Views are sorted by
directory name and must all live in one world frame.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import DataError
from .geometry import CameraModel, PlaneStack
from .renderer import Mpi, LoopableVolume, RenderWindow, render_mpi

CAMERA_FORMAT = "mtvloop-camera/1"
SCENE_FORMAT = "mtvloop-scene/1"


@dataclass
class VideoClip:
    """A fixed-camera clip: frames (F, H, W, 3) in [0, 1]."""

    frames: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError("frames must have shape (F, H, W, 3)")
        if self.frames.shape[0] < 2:
            raise ValueError("clip needs at least two frames")
        self.frames = np.clip(self.frames, 0.0, 1.0)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class ViewRecord:
    name: str
    clip: VideoClip
    camera: CameraModel
    average_image: np.ndarray    # (H, W, 3)
    loopable_mask2d: np.ndarray  # (H, W) in {0, 1}

    def __post_init__(self):
        h, w = self.clip.frames.shape[1:3]
        if self.average_image.shape != (h, w, 3):
            raise ValueError("average image does not match clip dimensions")
        if self.loopable_mask2d.shape != (h, w):
            raise ValueError("mask does not match clip dimensions")
        uniq = np.unique(self.loopable_mask2d)
        if not np.all(np.isin(uniq, [0, 1])):
            raise ValueError("mask must be binary")


@dataclass
class DatasetConfig:
    """Thresholds for the 2D loopable-mask heuristic.

    A pixel is marked loopable when its temporal variance exceeds var_thresh
    and some (start, period) pair wraps with a neighborhood-averaged squared
    mismatch below loop_thresh. The minimum period is base_min_period frames
    at base_fps, scaled by the clip's frame rate.
    """

    var_thresh: float = 1e-3
    loop_thresh: float = 5e-3
    base_min_period: int = 8
    base_fps: float = 25.0

    def min_period(self, fps: float) -> int:
        return max(2, int(round(self.base_min_period * fps / self.base_fps)))


@dataclass
class SceneMeta:
    near: float = 1.0
    far: float = 100.0
    fps: float = 25.0


def average_image(clip: VideoClip) -> np.ndarray:
    """Per-pixel arithmetic mean over frames."""
    return np.mean(clip.frames, axis=0)


def _box_mean3(img: np.ndarray) -> np.ndarray:
    """3x3 neighborhood mean with edge replication."""
    padded = np.pad(img, 1, mode="edge")
    out = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            out += padded[dy:dy + img.shape[0], dx:dx + img.shape[1]]
    return out / 9.0


def loopable_mask2d(clip: VideoClip, var_thresh: float = 1e-3,
                    loop_thresh: float = 5e-3,
                    min_period: Optional[int] = None) -> np.ndarray:
    """Binary map of pixels with the potential to form a temporal loop.

    pixel = 1 iff temporal variance > var_thresh and there exist a period
    P in [min_period, F-1] and a start t0 such that the squared wrap
    mismatch |V(t0) - V(t0+P)|^2, averaged over channels and over a 3x3
    spatial neighborhood, falls below loop_thresh.
    """
    frames = clip.frames
    num = frames.shape[0]
    if min_period is None:
        min_period = DatasetConfig().min_period(clip.fps)
    min_period = max(2, int(min_period))
    if num < min_period + 1:
        raise ValueError(
            f"clip too short: {num} frames, minimum period {min_period}")
    variance = np.mean(np.var(frames, axis=0), axis=-1)
    dynamic = variance > var_thresh
    best = np.full(frames.shape[1:3], np.inf)
    for period in range(min_period, num):
        for t0 in range(0, num - period):
            diff = frames[t0] - frames[t0 + period]
            mismatch = _box_mean3(np.mean(diff * diff, axis=-1))
            best = np.minimum(best, mismatch)
    return (dynamic & (best < loop_thresh)).astype(np.uint8)


def save_frame_png(path: Path, image: np.ndarray) -> None:
    data = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def load_frame_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def quantize8(image: np.ndarray) -> np.ndarray:
    """Values after an 8-bit save/load round trip."""
    return np.clip(np.round(image * 255.0), 0, 255) / 255.0


def load_camera(path: Path) -> CameraModel:
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read camera file {path}: {exc}") from exc
    if obj.get("format") != CAMERA_FORMAT:
        raise DataError(f"{path}: unsupported camera format {obj.get('format')!r}")
    try:
        return CameraModel.from_json(obj)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: invalid camera: {exc}") from exc


def save_camera(path: Path, camera: CameraModel) -> None:
    obj = {"format": CAMERA_FORMAT}
    obj.update(camera.to_json())
    path.write_text(json.dumps(obj, indent=2))


def load_scene_meta(root: Path) -> SceneMeta:
    path = Path(root) / "scene.json"
    if not path.exists():
        return SceneMeta()
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if obj.get("format") != SCENE_FORMAT:
        raise DataError(f"{path}: unsupported scene format {obj.get('format')!r}")
    return SceneMeta(near=float(obj["near"]), far=float(obj["far"]),
                     fps=float(obj.get("fps", 25.0)))


def save_scene_meta(root: Path, meta: SceneMeta) -> None:
    obj = {"format": SCENE_FORMAT, "near": meta.near, "far": meta.far,
           "fps": meta.fps}
    (Path(root) / "scene.json").write_text(json.dumps(obj, indent=2))


def load_dataset(root_path, config: Optional[DatasetConfig] = None) -> list[ViewRecord]:
    """Load every view under root_path, sorted by directory name.

    Computes the average image and the 2D loopable mask for each view.
    """
    config = config or DatasetConfig()
    root = Path(root_path)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    meta = load_scene_meta(root)
    view_dirs = sorted(
        p for p in root.iterdir()
        if p.is_dir()
        and ((p / "camera.json").exists() or any(p.glob("frame_*.png"))))
    if len(view_dirs) < 2:
        raise DataError(f"dataset {root} has fewer than 2 views")
    views = []
    for vdir in view_dirs:
        camera_path = vdir / "camera.json"
        if not camera_path.exists():
            raise DataError(f"missing camera file {camera_path}")
        camera = load_camera(camera_path)
        frame_paths = sorted(vdir.glob("frame_*.png"))
        if len(frame_paths) < 2:
            raise DataError(f"{vdir}: fewer than 2 frames")
        frames = []
        shape = None
        for fpath in frame_paths:
            frame = load_frame_png(fpath)
            if shape is None:
                shape = frame.shape
            elif frame.shape != shape:
                raise DataError(
                    f"{vdir}: inconsistent resolution, {fpath.name} is "
                    f"{frame.shape[1]}x{frame.shape[0]} but expected "
                    f"{shape[1]}x{shape[0]}")
            frames.append(frame)
        if shape[0] != camera.height or shape[1] != camera.width:
            raise DataError(
                f"{vdir}: frames are {shape[1]}x{shape[0]} but the camera "
                f"declares {camera.width}x{camera.height}")
        clip = VideoClip(frames=np.stack(frames), fps=meta.fps)
        avg = average_image(clip)
        mask = loopable_mask2d(clip, config.var_thresh, config.loop_thresh,
                               config.min_period(meta.fps))
        views.append(ViewRecord(name=vdir.name, clip=clip, camera=camera,
                                average_image=avg, loopable_mask2d=mask))
    if len(views) < 2:
        raise DataError(f"dataset {root} has fewer than 2 views")
    return views


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass
class PlaneAnimation:
    """Periodic brightness wave over a masked texel region.

    rgb(t) = base * (1 + amplitude * sin(2*pi*t/period + phase)) inside the
    mask; exactly period-P in discrete frames.
    """

    period: int
    amplitude: float = 0.25
    mask: Optional[np.ndarray] = None      # (H, W) bool; None = whole plane
    phase: Optional[np.ndarray] = None     # (H, W) radians; None = zero


@dataclass
class ScenePlane:
    depth: float
    rgba: np.ndarray                       # (H, W, 4)
    animation: Optional[PlaneAnimation] = None


@dataclass
class SceneSpec:
    planes: list[ScenePlane]
    cameras: list[CameraModel]
    num_frames: int
    fps: float = 12.0
    near: float = 1.0
    far: float = 20.0
    reference_index: int = 0


@dataclass
class SyntheticScene:
    """In-memory twin of a dataset written by make_synthetic_scene."""

    root: Path
    spec: SceneSpec
    frames: list[np.ndarray]         # per view, (F, H, W, 3), 8-bit quantized
    gt_masks: list[np.ndarray]       # per view, (H, W) uint8
    base_mpi: Mpi                    # static base planes
    animation_volume: np.ndarray     # (D, H, W) float in {0, 1}


def _frame_planes(spec: SceneSpec, t: int) -> np.ndarray:
    planes = []
    for plane in spec.planes:
        rgba = plane.rgba.astype(np.float64).copy()
        anim = plane.animation
        if anim is not None:
            mask = anim.mask
            if mask is None:
                mask = np.ones(rgba.shape[:2], dtype=bool)
            phase = anim.phase if anim.phase is not None else 0.0
            wave = 1.0 + anim.amplitude * np.sin(
                2.0 * np.pi * t / anim.period + phase)
            mod = np.where(mask, wave, 1.0)
            rgba[..., :3] = np.clip(rgba[..., :3] * mod[..., None], 0.0, 1.0)
        planes.append(rgba)
    return np.stack(planes)


def make_synthetic_scene(spec: SceneSpec, root_path) -> SyntheticScene:
    """Render ground-truth multi-view clips with the package's own
    compositing model and write them in load_dataset layout.

    Also stores the ground-truth planes and the animated-texel volume under
    root/gt for oracle use.
    """
    if not spec.planes:
        raise ValueError("scene spec has no planes")
    if not spec.cameras:
        raise ValueError("scene spec has no cameras")
    depths = [p.depth for p in spec.planes]
    if any(d < spec.near or d > spec.far for d in depths):
        raise ValueError("planes outside near/far range")
    if any(d2 <= d1 for d1, d2 in zip(depths, depths[1:])):
        raise ValueError("plane depths must be strictly increasing")
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)

    ref_cam = spec.cameras[spec.reference_index]
    stack_depths = np.array(depths, dtype=np.float64)
    if stack_depths.size == 1:
        raise ValueError("need at least two planes")
    stack = PlaneStack(depths=stack_depths, reference=ref_cam)

    anim_volume = np.zeros((len(spec.planes),) + spec.planes[0].rgba.shape[:2])
    for idx, plane in enumerate(spec.planes):
        if plane.animation is not None:
            mask = plane.animation.mask
            if mask is None:
                mask = np.ones(plane.rgba.shape[:2], dtype=bool)
            anim_volume[idx] = mask.astype(np.float64)
    loop_vol = LoopableVolume(values=anim_volume)

    frames_by_view: list[np.ndarray] = []
    gt_masks: list[np.ndarray] = []
    per_frame_planes = [_frame_planes(spec, t) for t in range(spec.num_frames)]
    for vi, camera in enumerate(spec.cameras):
        vdir = root / f"view_{vi:02d}"
        vdir.mkdir(exist_ok=True)
        save_camera(vdir / "camera.json", camera)
        window = RenderWindow(view=camera)
        view_frames = []
        for t in range(spec.num_frames):
            mpi_t = Mpi(planes=per_frame_planes[t], stack=stack)
            rgb = render_mpi(mpi_t, None, window).rgb
            save_frame_png(vdir / f"frame_{t:04d}.png", rgb)
            view_frames.append(quantize8(rgb))
        frames_by_view.append(np.stack(view_frames))
        base = Mpi(planes=per_frame_planes[0], stack=stack)
        rendered_mask = render_mpi(base, loop_vol, window).loop_mask
        gt_mask = (rendered_mask >= 0.5).astype(np.uint8)
        Image.fromarray(gt_mask * 255).save(root / f"gt_mask_view_{vi:02d}.png")
        gt_masks.append(gt_mask)

    save_scene_meta(root, SceneMeta(near=spec.near, far=spec.far, fps=spec.fps))

    base_planes = _frame_planes(spec, 0)
    gt_dir = root / "gt"
    gt_dir.mkdir(exist_ok=True)
    np.savez_compressed(
        gt_dir / "planes.npz",
        base_planes=np.stack([p.rgba for p in spec.planes]),
        depths=stack_depths,
        animation_volume=anim_volume,
    )
    return SyntheticScene(
        root=root,
        spec=spec,
        frames=frames_by_view,
        gt_masks=gt_masks,
        base_mpi=Mpi(planes=base_planes, stack=stack),
        animation_volume=anim_volume,
    )


def smooth_noise_texture(shape: tuple[int, int], rng: np.random.Generator,
                         coarse: int = 6, low: float = 0.15,
                         high: float = 0.9) -> np.ndarray:
    """Low-frequency random RGB texture, values in [low, high]."""
    from .geometry import resize_bilinear

    grid = rng.uniform(low, high, size=(coarse, coarse, 3))
    return resize_bilinear(grid, shape)


def block_noise_texture(shape: tuple[int, int], rng: np.random.Generator,
                        coarse: int = 4, low: float = 0.15,
                        high: float = 0.9) -> np.ndarray:
    """Piecewise-constant random RGB texture (flat blocks, sharp edges)."""
    h, w = shape
    grid = rng.uniform(low, high, size=(coarse, coarse, 3))
    ys = np.minimum((np.arange(h) * coarse) // max(h, 1), coarse - 1)
    xs = np.minimum((np.arange(w) * coarse) // max(w, 1), coarse - 1)
    return grid[np.ix_(ys, xs)]
