"""Pinhole cameras, plane-induced homographies and bilinear warping.

Conventions used throughout the package:
  * pixel coordinates are (x, y) = (column, row), with pixel centers at
    integer coordinates; homogeneous points are [x, y, 1]
  * poses are world-to-camera: X_cam = R @ X_world + t
  * images are numpy arrays of shape (H, W, C), values in [0, 1]
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ROT_TOL = 1e-6


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with a rigid world-to-camera pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray      # (3, 3), world -> camera
    translation: np.ndarray   # (3,)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        rot = np.array(self.rotation, dtype=np.float64)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > _ROT_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ROT_TOL:
            raise ValueError("rotation must have determinant +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    def __eq__(self, other):
        if not isinstance(other, CameraModel):
            return NotImplemented
        return (
            (self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            == (other.fx, other.fy, other.cx, other.cy, other.width, other.height)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def resized(self, new_width: int, new_height: int) -> "CameraModel":
        """Camera for the same view rendered at a different resolution.

        Uses the center-aligned convention: continuous coordinate x maps to
        (x + 0.5) * s - 0.5 when the image is resampled by factor s.
        """
        sx = new_width / self.width
        sy = new_height / self.height
        return CameraModel(
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=(self.cx + 0.5) * sx - 0.5,
            cy=(self.cy + 0.5) * sy - 0.5,
            width=int(new_width),
            height=int(new_height),
            rotation=self.rotation,
            translation=self.translation,
        )

    def scaled(self, scale: float) -> "CameraModel":
        return self.resized(
            max(1, int(round(self.width * scale))),
            max(1, int(round(self.height * scale))),
        )

    def to_json(self) -> dict:
        pose = np.concatenate(
            [self.rotation, self.translation.reshape(3, 1)], axis=1
        )
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "world_to_camera": pose.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CameraModel":
        pose = np.array(obj["world_to_camera"], dtype=np.float64)
        if pose.shape != (3, 4):
            raise ValueError("world_to_camera must be a 3x4 matrix")
        return cls(
            fx=float(obj["fx"]),
            fy=float(obj["fy"]),
            cx=float(obj["cx"]),
            cy=float(obj["cy"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
            rotation=pose[:, :3],
            translation=pose[:, 3],
        )


@dataclass(frozen=True)
class PlaneStack:
    """Fronto-parallel depth planes in the frustum of a reference camera."""

    depths: np.ndarray        # (D,), strictly increasing, scene units
    reference: CameraModel

    def __post_init__(self):
        depths = np.array(self.depths, dtype=np.float64).reshape(-1)
        if depths.size < 2:
            raise ValueError("need at least two planes")
        if depths[0] <= 0:
            raise ValueError("near depth must be positive")
        if np.any(np.diff(depths) <= 0):
            raise ValueError("depths must be strictly increasing")
        depths.setflags(write=False)
        object.__setattr__(self, "depths", depths)

    @property
    def num_planes(self) -> int:
        return int(self.depths.size)

    @property
    def near(self) -> float:
        return float(self.depths[0])

    @property
    def far(self) -> float:
        return float(self.depths[-1])


def disparity_depths(near: float, far: float, num_planes: int) -> np.ndarray:
    """Plane depths with disparity (1/depth) linearly spaced near to far.

    Returned in increasing depth order, depths[0] == near, depths[-1] == far.
    """
    if not (0 < near < far):
        raise ValueError(f"invalid depth range [{near}, {far}]")
    if num_planes < 2:
        raise ValueError("need at least two planes")
    disparities = np.linspace(1.0 / near, 1.0 / far, num_planes)
    return 1.0 / disparities


def relative_pose(ref: CameraModel, tgt: CameraModel):
    """Rigid transform taking ref-camera coordinates to tgt-camera coordinates."""
    rot = tgt.rotation @ ref.rotation.T
    trans = tgt.translation - rot @ ref.translation
    return rot, trans


def plane_homography(ref: CameraModel, tgt: CameraModel, depth: float) -> np.ndarray:
    """Inverse-warp homography for the plane z=depth in the ref camera frame.

    Maps target-image pixel coordinates to reference-plane pixel coordinates.
    Normalized so that element (2, 2) equals 1 when nonzero.
    """
    if depth <= 0:
        raise ValueError("plane depth must be positive")
    rot, trans = relative_pose(ref, tgt)
    normal = np.array([0.0, 0.0, 1.0])
    mid = rot + np.outer(trans, normal) / depth
    # det(mid) == 1 - C_z / depth where C is the target center in ref coords;
    # it vanishes exactly when the plane passes through the target camera.
    if abs(np.linalg.det(mid)) < 1e-9:
        raise ValueError("degenerate homography: camera center lies on the plane")
    forward = tgt.intrinsics @ mid @ np.linalg.inv(ref.intrinsics)
    hom = np.linalg.inv(forward)
    if abs(hom[2, 2]) > 1e-12:
        hom = hom / hom[2, 2]
    return hom


class SampleGrid:
    """Precomputed bilinear sampling of a (H, W, C) source image.

    Samples outside the source domain contribute zero in all channels.
    gather() and scatter_add() are exact adjoints of each other.
    """

    def __init__(self, xs: np.ndarray, ys: np.ndarray, src_h: int, src_w: int,
                 valid: np.ndarray | None = None):
        self.shape = xs.shape
        self.src_h = int(src_h)
        self.src_w = int(src_w)
        if valid is None:
            valid = np.isfinite(xs) & np.isfinite(ys)
        x0 = np.floor(xs)
        y0 = np.floor(ys)
        wx = xs - x0
        wy = ys - y0
        x0 = x0.astype(np.int64)
        y0 = y0.astype(np.int64)
        x1 = x0 + 1
        y1 = y0 + 1

        def inb_x(x):
            return (x >= 0) & (x < src_w)

        def inb_y(y):
            return (y >= 0) & (y < src_h)

        weights = [
            (y0, x0, (1 - wy) * (1 - wx)),
            (y0, x1, (1 - wy) * wx),
            (y1, x0, wy * (1 - wx)),
            (y1, x1, wy * wx),
        ]
        self.corners = []
        for cy, cx, w in weights:
            mask = valid & inb_y(cy) & inb_x(cx)
            w = np.where(mask, w, 0.0)
            cy = np.clip(cy, 0, src_h - 1)
            cx = np.clip(cx, 0, src_w - 1)
            self.corners.append((cy, cx, w))

    def gather(self, img: np.ndarray) -> np.ndarray:
        if img.shape[0] != self.src_h or img.shape[1] != self.src_w:
            raise ValueError("image shape does not match sample grid")
        squeeze = img.ndim == 2
        if squeeze:
            img = img[..., None]
        out = np.zeros(self.shape + (img.shape[-1],), dtype=img.dtype)
        for cy, cx, w in self.corners:
            out += img[cy, cx] * w[..., None].astype(img.dtype, copy=False)
        return out[..., 0] if squeeze else out

    def scatter_add(self, grad: np.ndarray, out: np.ndarray) -> None:
        """Adjoint of gather: accumulate output-space gradients into out."""
        squeeze = grad.ndim == 2
        if squeeze:
            grad = grad[..., None]
            out = out[..., None]
        channels = grad.shape[-1]
        size = self.src_h * self.src_w
        for cy, cx, w in self.corners:
            flat = (cy * self.src_w + cx).ravel()
            for ch in range(channels):
                vals = (grad[..., ch] * w).ravel()
                out[..., ch] += np.bincount(
                    flat, weights=vals, minlength=size
                ).reshape(self.src_h, self.src_w).astype(out.dtype, copy=False)


def homography_grid(hom: np.ndarray, out_size: tuple[int, int],
                    src_shape: tuple[int, int]) -> SampleGrid:
    """SampleGrid that pulls each output pixel through the homography."""
    h, w = out_size
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    pts = np.stack([xs, ys, np.ones_like(xs)], axis=-1) @ hom.T
    z = pts[..., 2]
    valid = np.abs(z) > 1e-12
    zsafe = np.where(valid, z, 1.0)
    sx = pts[..., 0] / zsafe
    sy = pts[..., 1] / zsafe
    return SampleGrid(sx, sy, src_shape[0], src_shape[1], valid=valid)


def warp_bilinear(image: np.ndarray, homography: np.ndarray,
                  out_size: tuple[int, int]) -> np.ndarray:
    """Inverse-warp an image: out[y, x] = image(H @ [x, y, 1]).

    Bilinear interpolation, zero outside the source domain (alpha included).
    """
    grid = homography_grid(np.asarray(homography, dtype=np.float64), out_size,
                           image.shape[:2])
    return grid.gather(image)


def translation_homography(dx: float, dy: float) -> np.ndarray:
    hom = np.eye(3)
    hom[0, 2] = dx
    hom[1, 2] = dy
    return hom


def resize_bilinear(image: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Center-aligned bilinear resize with edge clamping.

    Unlike warp_bilinear this never samples zeros outside the image, which
    keeps tile borders intact when rescaling tiles.
    """
    h_out, w_out = out_size
    h_in, w_in = image.shape[:2]
    ys = (np.arange(h_out, dtype=np.float64) + 0.5) * (h_in / h_out) - 0.5
    xs = (np.arange(w_out, dtype=np.float64) + 0.5) * (w_in / w_out) - 0.5
    ys = np.clip(ys, 0, h_in - 1)
    xs = np.clip(xs, 0, w_in - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h_in - 1)
    x1 = np.minimum(x0 + 1, w_in - 1)
    wy = (ys - y0).reshape(-1, 1)
    wx = (xs - x0).reshape(1, -1)
    squeeze = image.ndim == 2
    img = image[..., None] if squeeze else image
    wy_c = wy[..., None]
    wx_c = wx[..., None]
    top = img[y0][:, x0] * (1 - wx_c) + img[y0][:, x1] * wx_c
    bot = img[y1][:, x0] * (1 - wx_c) + img[y1][:, x1] * wx_c
    out = top * (1 - wy_c) + bot * wy_c
    out = out.astype(image.dtype, copy=False)
    return out[..., 0] if squeeze else out


def area_downsample(image: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Area-averaging resample via PIL's box filter, channel by channel."""
    from PIL import Image

    h_out, w_out = out_size
    squeeze = image.ndim == 2
    img = image[..., None] if squeeze else image
    chans = []
    for ch in range(img.shape[-1]):
        pil = Image.fromarray(np.ascontiguousarray(img[..., ch], dtype=np.float32), mode="F")
        chans.append(np.asarray(pil.resize((w_out, h_out), Image.BOX)))
    out = np.stack(chans, axis=-1).astype(image.dtype, copy=False)
    return out[..., 0] if squeeze else out
