"""Sparse multi-tile video: tiled planes with empty/static/loop labels.

Planes of a trained volume are split into square tiles. Tiles whose alpha
never exceeds tau_alpha are culled; tiles with loopable content are lifted
to T-frame patch sequences. The result renders like the dense volume but
stores only occupied tiles.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .geometry import CameraModel, PlaneStack, resize_bilinear
from .renderer import Mpi, LoopableVolume


class TileLabel(IntEnum):
    EMPTY = 0
    STATIC = 1
    LOOP = 2


@dataclass
class Tile:
    plane: int
    row: int
    col: int
    label: TileLabel
    static_patch: Optional[np.ndarray] = None  # (ts, ts, 4)
    loop_patch: Optional[np.ndarray] = None    # (T, ts, ts, 4)

    def __post_init__(self):
        if self.label == TileLabel.STATIC:
            if self.static_patch is None or self.loop_patch is not None:
                raise ValueError("static tile must carry exactly static_patch")
        elif self.label == TileLabel.LOOP:
            if self.loop_patch is None or self.static_patch is not None:
                raise ValueError("loop tile must carry exactly loop_patch")
        else:
            raise ValueError("empty tiles are culled, not stored")

    @property
    def key(self):
        return (self.plane, self.row, self.col)


@dataclass
class Mtv:
    """Sparse tiled video over a plane stack.

    tile_size is the current texel resolution of each tile; base_tile_size
    is the resolution at which the plane grid was laid out. Resampling
    changes tile_size but never the grid, so each tile keeps its frustum
    footprint across pyramid levels.
    """

    tiles: list[Tile]
    stack: PlaneStack
    tile_size: int
    num_frames: int
    grid: tuple[int, int]                  # (rows, cols) per plane
    base_tile_size: int = 0

    def __post_init__(self):
        if self.base_tile_size == 0:
            self.base_tile_size = self.tile_size
        keys = [t.key for t in self.tiles]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate tile positions")
        if keys != sorted(keys):
            self.tiles.sort(key=lambda t: t.key)
        for tile in self.tiles:
            if tile.label == TileLabel.LOOP and tile.loop_patch.shape[0] != self.num_frames:
                raise ValueError("loop tile frame count does not match T")

    @property
    def scale(self) -> float:
        return self.tile_size / self.base_tile_size

    def plane_shape(self) -> tuple[int, int]:
        rows, cols = self.grid
        return rows * self.tile_size, cols * self.tile_size

    def current_stack(self) -> PlaneStack:
        """Plane stack whose reference camera is in current texel units."""
        if self.tile_size == self.base_tile_size:
            return self.stack
        s = self.scale
        ref = self.stack.reference
        camera = CameraModel(
            fx=ref.fx * s, fy=ref.fy * s,
            cx=(ref.cx + 0.5) * s - 0.5, cy=(ref.cy + 0.5) * s - 0.5,
            width=max(1, int(np.floor(ref.width * s))),
            height=max(1, int(np.floor(ref.height * s))),
            rotation=ref.rotation, translation=ref.translation)
        return PlaneStack(depths=self.stack.depths, reference=camera)

    def loop_tiles(self) -> list[Tile]:
        return [t for t in self.tiles if t.label == TileLabel.LOOP]

    def static_tiles(self) -> list[Tile]:
        return [t for t in self.tiles if t.label == TileLabel.STATIC]


@dataclass
class TileGrid:
    """Lossless tiling of a dense volume, padded so tiles divide evenly.

    Padding (when H or W is not divisible by the tile size) extends the
    planes with alpha 0.
    """

    rgba: np.ndarray       # (D, Hp, Wp, 4)
    loopable: np.ndarray   # (D, Hp, Wp)
    tile_size: int
    grid: tuple[int, int]
    stack: PlaneStack
    orig_size: tuple[int, int]

    def tile_rgba(self, plane: int, row: int, col: int) -> np.ndarray:
        ts = self.tile_size
        return self.rgba[plane, row * ts:(row + 1) * ts, col * ts:(col + 1) * ts]

    def tile_loopable(self, plane: int, row: int, col: int) -> np.ndarray:
        ts = self.tile_size
        return self.loopable[plane, row * ts:(row + 1) * ts, col * ts:(col + 1) * ts]


def subdivide(mpi: Mpi, loopable: Optional[LoopableVolume],
              tile_size: int = 16) -> TileGrid:
    """Split each plane into a regular grid of square tiles."""
    if tile_size < 2:
        raise ValueError("tile size too small")
    d, h, w = mpi.planes.shape[:3]
    rows = -(-h // tile_size)
    cols = -(-w // tile_size)
    hp, wp = rows * tile_size, cols * tile_size
    rgba = np.zeros((d, hp, wp, 4), dtype=mpi.planes.dtype)
    rgba[:, :h, :w] = mpi.planes
    loop = np.zeros((d, hp, wp), dtype=mpi.planes.dtype)
    if loopable is not None:
        loop[:, :h, :w] = loopable.values
    return TileGrid(rgba=rgba, loopable=loop, tile_size=tile_size,
                    grid=(rows, cols), stack=mpi.stack, orig_size=(h, w))


def classify_tile(tile_alpha: np.ndarray, tile_loopable: np.ndarray,
                  tau_alpha: float = 0.05, tau_loop: float = 0.5) -> TileLabel:
    """empty if max alpha <= tau_alpha; static if additionally the loop
    values stay below tau_loop; loop otherwise."""
    if np.max(tile_alpha) <= tau_alpha:
        return TileLabel.EMPTY
    if np.max(tile_loopable) < tau_loop:
        return TileLabel.STATIC
    return TileLabel.LOOP


def classify_grid(grid: TileGrid, tau_alpha: float = 0.05,
                  tau_loop: float = 0.5) -> np.ndarray:
    """Vectorized classify_tile over the whole grid; (D, rows, cols) labels."""
    ts = grid.tile_size
    d = grid.rgba.shape[0]
    rows, cols = grid.grid
    alpha = grid.rgba[..., 3].reshape(d, rows, ts, cols, ts)
    loop = grid.loopable.reshape(d, rows, ts, cols, ts)
    max_a = alpha.max(axis=(2, 4))
    max_l = loop.max(axis=(2, 4))
    labels = np.where(max_a <= tau_alpha, int(TileLabel.EMPTY),
                      np.where(max_l < tau_loop, int(TileLabel.STATIC),
                               int(TileLabel.LOOP)))
    return labels


def lift_and_cull(grid: TileGrid, labels: np.ndarray, num_frames: int,
                  noise_amp: float = 0.01, seed: int = 0) -> Mtv:
    """Drop empty tiles, keep static patches, lift loop tiles to T frames.

    Loop tiles replicate the static patch T times with i.i.d. uniform noise
    in [-noise_amp, +noise_amp] added to RGB of every frame (clamped to
    [0, 1]); alpha is copied without noise so geometry stays intact.
    """
    rng = np.random.default_rng(seed)
    d = grid.rgba.shape[0]
    rows, cols = grid.grid
    if labels.shape != (d, rows, cols):
        raise ValueError("label grid shape mismatch")
    tiles: list[Tile] = []
    for plane in range(d):
        for row in range(rows):
            for col in range(cols):
                label = TileLabel(int(labels[plane, row, col]))
                if label == TileLabel.EMPTY:
                    continue
                patch = grid.tile_rgba(plane, row, col)
                if label == TileLabel.STATIC:
                    tiles.append(Tile(plane, row, col, label,
                                      static_patch=patch.copy()))
                    continue
                seq = np.repeat(patch[None], num_frames, axis=0).copy()
                if noise_amp > 0:
                    noise = rng.uniform(-noise_amp, noise_amp,
                                        size=seq[..., :3].shape)
                    seq[..., :3] = np.clip(seq[..., :3] + noise, 0.0, 1.0)
                tiles.append(Tile(plane, row, col, label, loop_patch=seq))
    return Mtv(tiles=tiles, stack=grid.stack, tile_size=grid.tile_size,
               num_frames=num_frames, grid=grid.grid,
               base_tile_size=grid.tile_size)


def build_mtv(mpi: Mpi, loopable: Optional[LoopableVolume],
              tile_size: int = 16, num_frames: int = 50,
              tau_alpha: float = 0.05, tau_loop: float = 0.5,
              noise_amp: float = 0.01, seed: int = 0) -> Mtv:
    """subdivide -> classify -> lift_and_cull in one call."""
    grid = subdivide(mpi, loopable, tile_size)
    labels = classify_grid(grid, tau_alpha, tau_loop)
    return lift_and_cull(grid, labels, num_frames, noise_amp, seed)


def resample_mtv(mtv: Mtv, scale: float) -> Mtv:
    """Resample every tile's texels by the given factor.

    The plane grid and each tile's frustum footprint are unchanged; only
    the texel density moves. T is unchanged.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    new_ts = int(round(mtv.tile_size * scale))
    if new_ts < 2:
        raise ValueError(f"resampled tile size {new_ts} is too small")
    tiles = []
    for tile in mtv.tiles:
        if new_ts == mtv.tile_size:
            static = None if tile.static_patch is None else tile.static_patch.copy()
            loop = None if tile.loop_patch is None else tile.loop_patch.copy()
        elif tile.label == TileLabel.STATIC:
            static = resize_bilinear(tile.static_patch, (new_ts, new_ts))
            loop = None
        else:
            static = None
            loop = np.stack([resize_bilinear(fr, (new_ts, new_ts))
                             for fr in tile.loop_patch])
        tiles.append(Tile(tile.plane, tile.row, tile.col, tile.label,
                          static_patch=static, loop_patch=loop))
    return Mtv(tiles=tiles, stack=mtv.stack, tile_size=new_ts,
               num_frames=mtv.num_frames, grid=mtv.grid,
               base_tile_size=mtv.base_tile_size)


def resample_to_tile_size(mtv: Mtv, new_ts: int) -> Mtv:
    return resample_mtv(mtv, new_ts / mtv.tile_size)


def materialize_frame(mtv: Mtv, t: int, dtype=None) -> np.ndarray:
    """Dense (D, Hp, Wp, 4) planes for frame (t mod T); absent tiles alpha 0."""
    ts = mtv.tile_size
    hp, wp = mtv.plane_shape()
    d = mtv.stack.num_planes
    frame = int(t) % mtv.num_frames
    planes = np.zeros((d, hp, wp, 4), dtype=dtype or np.float64)
    for tile in mtv.tiles:
        patch = (tile.static_patch if tile.label == TileLabel.STATIC
                 else tile.loop_patch[frame])
        planes[tile.plane, tile.row * ts:(tile.row + 1) * ts,
               tile.col * ts:(tile.col + 1) * ts] = patch
    return planes


def densify(mtv: Mtv, t: int) -> Mpi:
    """Materialize frame (t mod T) as a dense Mpi at current texel scale."""
    planes = materialize_frame(mtv, t)
    return Mpi(planes=planes, stack=mtv.current_stack())


def gather_tile_grads(mtv: Mtv, d_planes: np.ndarray) -> list[np.ndarray]:
    """Slice a dense plane gradient back into per-loop-tile patches."""
    ts = mtv.tile_size
    grads = []
    for tile in mtv.loop_tiles():
        grads.append(d_planes[tile.plane,
                              tile.row * ts:(tile.row + 1) * ts,
                              tile.col * ts:(tile.col + 1) * ts].copy())
    return grads


def count_params(mtv: Mtv) -> int:
    """Stored scalars: ts*ts*4 per static tile, T times that per loop tile."""
    ts2 = mtv.tile_size * mtv.tile_size * 4
    n_static = len(mtv.static_tiles())
    n_loop = len(mtv.loop_tiles())
    return n_static * ts2 + n_loop * mtv.num_frames * ts2


def dense_param_count(mtv: Mtv) -> int:
    """Parameter count of the equivalent dense per-frame volume."""
    hp, wp = mtv.plane_shape()
    return mtv.stack.num_planes * mtv.num_frames * hp * wp * 4


# ---------------------------------------------------------------------------
# checkpoint io
#
# Byte layout (little endian):
#   bytes 0..7   magic b"MTVTIL\x00\x01"
#   bytes 8..11  uint32 header length N
#   then         UTF-8 JSON header {"version": 1, "tile_size",
#                "base_tile_size", "num_frames", "depths", "camera",
#                "grid": [rows, cols],
#                "tiles": [{"plane", "row", "col", "label", "offset"}]}
#   then         per-tile float32 payload at the stated offsets (counted in
#                float32 elements from the start of the payload); static
#                tiles hold ts*ts*4 values, loop tiles T*ts*ts*4.

MTV_MAGIC = b"MTVTIL\x00\x01"
_LABEL_NAMES = {TileLabel.STATIC: "static", TileLabel.LOOP: "loop"}
_LABEL_VALUES = {v: k for k, v in _LABEL_NAMES.items()}


def save_mtv(path, mtv: Mtv) -> None:
    path = Path(path)
    records = []
    payload = bytearray()
    offset = 0
    for tile in mtv.tiles:
        data = (tile.static_patch if tile.label == TileLabel.STATIC
                else tile.loop_patch)
        blob = np.ascontiguousarray(data, dtype="<f4").tobytes()
        records.append({"plane": tile.plane, "row": tile.row, "col": tile.col,
                        "label": _LABEL_NAMES[tile.label], "offset": offset})
        payload.extend(blob)
        offset += data.size
    header = {
        "version": 1,
        "tile_size": mtv.tile_size,
        "base_tile_size": mtv.base_tile_size,
        "num_frames": mtv.num_frames,
        "depths": [float(d) for d in mtv.stack.depths],
        "camera": mtv.stack.reference.to_json(),
        "grid": list(mtv.grid),
        "tiles": records,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MTV_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_mtv(path, dtype: str = "float32") -> Mtv:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:8] != MTV_MAGIC:
        raise DataError(f"{path}: not a tiled-video checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt header: {exc}") from exc
    if header.get("version") != 1:
        raise DataError(f"{path}: unsupported version {header.get('version')!r}")
    ts = int(header["tile_size"])
    num_frames = int(header["num_frames"])
    payload = np.frombuffer(raw, dtype="<f4", offset=12 + hlen)
    tiles = []
    for rec in header["tiles"]:
        label = _LABEL_VALUES.get(rec["label"])
        if label is None:
            raise DataError(f"{path}: unknown tile label {rec['label']!r}")
        count = ts * ts * 4 * (num_frames if label == TileLabel.LOOP else 1)
        start = int(rec["offset"])
        chunk = payload[start:start + count]
        if chunk.size != count:
            raise DataError(f"{path}: truncated tile payload")
        if label == TileLabel.STATIC:
            tiles.append(Tile(rec["plane"], rec["row"], rec["col"], label,
                              static_patch=chunk.reshape(ts, ts, 4).astype(dtype)))
        else:
            tiles.append(Tile(rec["plane"], rec["row"], rec["col"], label,
                              loop_patch=chunk.reshape(num_frames, ts, ts, 4).astype(dtype)))
    camera = CameraModel.from_json(header["camera"])
    stack = PlaneStack(depths=np.array(header["depths"]), reference=camera)
    return Mtv(tiles=tiles, stack=stack, tile_size=ts, num_frames=num_frames,
               grid=tuple(header["grid"]),
               base_tile_size=int(header["base_tile_size"]))
