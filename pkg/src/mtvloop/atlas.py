"""Texture-atlas packing of a tiled video for the real-time viewer.

On-disk bundle (all the viewer needs):

    bundle/
      manifest.json      schema "mtv-bundle/1", see MANIFEST_SCHEMA below
      static.png         RGBA atlas of static tiles
      dyn_0000.png ...   one RGBA atlas per frame; frame f holds every loop
                         tile's frame-f patch at a fixed per-tile slot

Texels are quantized to 8 bits (the declared export precision), straight
alpha. Tiles are packed row-major into the smallest power-of-two-width
atlas that fits; rows are only as tall as needed.

MANIFEST_SCHEMA (field by field):
  version          "mtv-bundle/1"
  tile_size        texel resolution of each (square) tile
  base_tile_size   tile resolution of the original grid layout
  num_frames       T, frame count of loop tiles
  depths           list of D plane depths, increasing, scene units
  grid             [rows, cols] tiles per plane
  camera           reference pinhole camera (see scene_io camera schema)
  static_atlas     {"file", "width", "height"}
  dynamic_atlas    {"files": [...], "width", "height"}
  tiles            list of {"plane", "row", "col", "label": "static"|"loop",
                   "rect": [x, y, w, h]} with rect in the tile's atlas
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .geometry import CameraModel, PlaneStack
from .mtv import Mtv, Tile, TileLabel

BUNDLE_VERSION = "mtv-bundle/1"


@dataclass
class AtlasBundle:
    static_atlas: np.ndarray          # (Hs, Ws, 4) uint8
    dynamic_frames: list[np.ndarray]  # T arrays (Hd, Wd, 4) uint8
    manifest: dict


def _quantize(patch: np.ndarray) -> np.ndarray:
    return np.clip(np.round(patch * 255.0), 0, 255).astype(np.uint8)


def _pow2_at_least(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def _atlas_layout(count: int, tile_size: int, max_dim: int):
    """Row-major shelf layout; returns (width, height, rects).

    Width is the smallest power of two accommodating a near-square grid of
    uniform tiles; height is only as tall as the used rows.
    """
    if count == 0:
        return 1, 1, []
    width = _pow2_at_least(tile_size * math.ceil(math.sqrt(count)))
    per_row = width // tile_size
    rows = math.ceil(count / per_row)
    height = rows * tile_size
    if width > max_dim or height > max_dim:
        raise DataError(
            f"atlas {width}x{height} exceeds the maximum dimension {max_dim}")
    rects = []
    for i in range(count):
        r, c = divmod(i, per_row)
        rects.append((c * tile_size, r * tile_size, tile_size, tile_size))
    return width, height, rects


def pack(mtv: Mtv, max_dim: int = 4096) -> AtlasBundle:
    """Pack static and loop tiles into separate atlases plus a manifest."""
    ts = mtv.tile_size
    statics = mtv.static_tiles()
    loops = mtv.loop_tiles()
    sw, sh, srects = _atlas_layout(len(statics), ts, max_dim)
    dw, dh, lrects = _atlas_layout(len(loops), ts, max_dim)

    static_atlas = np.zeros((sh, sw, 4), dtype=np.uint8)
    for tile, (x, y, w, h) in zip(statics, srects):
        static_atlas[y:y + h, x:x + w] = _quantize(tile.static_patch)
    dynamic = [np.zeros((dh, dw, 4), dtype=np.uint8)
               for _ in range(mtv.num_frames)]
    for tile, (x, y, w, h) in zip(loops, lrects):
        for f in range(mtv.num_frames):
            dynamic[f][y:y + h, x:x + w] = _quantize(tile.loop_patch[f])

    rect_of = {}
    for tile, rect in zip(statics, srects):
        rect_of[tile.key] = rect
    for tile, rect in zip(loops, lrects):
        rect_of[tile.key] = rect
    records = []
    for tile in mtv.tiles:
        records.append({
            "plane": tile.plane, "row": tile.row, "col": tile.col,
            "label": "static" if tile.label == TileLabel.STATIC else "loop",
            "rect": list(rect_of[tile.key]),
        })
    manifest = {
        "version": BUNDLE_VERSION,
        "tile_size": ts,
        "base_tile_size": mtv.base_tile_size,
        "num_frames": mtv.num_frames,
        "depths": [float(d) for d in mtv.stack.depths],
        "grid": list(mtv.grid),
        "camera": mtv.stack.reference.to_json(),
        "static_atlas": {"file": "static.png", "width": sw, "height": sh},
        "dynamic_atlas": {
            "files": [f"dyn_{f:04d}.png" for f in range(mtv.num_frames)],
            "width": dw, "height": dh,
        },
        "tiles": records,
    }
    return AtlasBundle(static_atlas=static_atlas, dynamic_frames=dynamic,
                       manifest=manifest)


def _check_rects(records, atlas_shape, label, tile_size):
    height, width = atlas_shape
    used = np.zeros((height, width), dtype=np.uint8)
    for rec in records:
        x, y, w, h = rec["rect"]
        if w != tile_size or h != tile_size:
            raise DataError(f"tile rect {rec['rect']} has the wrong size")
        if x < 0 or y < 0 or x + w > width or y + h > height:
            raise DataError(f"tile rect {rec['rect']} outside the {label} atlas")
        used[y:y + h, x:x + w] += 1
        if used[y:y + h, x:x + w].max() > 1:
            raise DataError(f"overlapping rects in the {label} atlas")


def unpack(bundle: AtlasBundle) -> Mtv:
    """Reconstruct a renderable Mtv from a bundle (8-bit precision)."""
    man = bundle.manifest
    if man.get("version") != BUNDLE_VERSION:
        raise DataError(f"unsupported bundle version {man.get('version')!r}")
    ts = int(man["tile_size"])
    num_frames = int(man["num_frames"])
    statics = [r for r in man["tiles"] if r["label"] == "static"]
    loops = [r for r in man["tiles"] if r["label"] == "loop"]
    _check_rects(statics, bundle.static_atlas.shape[:2], "static", ts)
    if loops:
        if len(bundle.dynamic_frames) != num_frames:
            raise DataError("dynamic atlas frame count does not match manifest")
        _check_rects(loops, bundle.dynamic_frames[0].shape[:2], "dynamic", ts)
    tiles = []
    for rec in man["tiles"]:
        x, y, w, h = rec["rect"]
        if rec["label"] == "static":
            patch = bundle.static_atlas[y:y + h, x:x + w].astype(np.float32) / 255.0
            tiles.append(Tile(rec["plane"], rec["row"], rec["col"],
                              TileLabel.STATIC, static_patch=patch))
        elif rec["label"] == "loop":
            seq = np.stack([fr[y:y + h, x:x + w] for fr in bundle.dynamic_frames])
            tiles.append(Tile(rec["plane"], rec["row"], rec["col"],
                              TileLabel.LOOP,
                              loop_patch=seq.astype(np.float32) / 255.0))
        else:
            raise DataError(f"unknown tile label {rec['label']!r}")
    camera = CameraModel.from_json(man["camera"])
    stack = PlaneStack(depths=np.array(man["depths"]), reference=camera)
    return Mtv(tiles=tiles, stack=stack, tile_size=ts, num_frames=num_frames,
               grid=tuple(man["grid"]),
               base_tile_size=int(man["base_tile_size"]))


def save_bundle(bundle: AtlasBundle, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(bundle.manifest, indent=2))
    Image.fromarray(bundle.static_atlas, mode="RGBA").save(out / "static.png")
    for f, frame in enumerate(bundle.dynamic_frames):
        Image.fromarray(frame, mode="RGBA").save(out / f"dyn_{f:04d}.png")
    return out


def load_bundle(bundle_dir) -> AtlasBundle:
    root = Path(bundle_dir)
    man_path = root / "manifest.json"
    try:
        manifest = json.loads(man_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {man_path}: {exc}") from exc
    if manifest.get("version") != BUNDLE_VERSION:
        raise DataError(
            f"unsupported bundle version {manifest.get('version')!r}")

    def read_atlas(name, expect_w, expect_h):
        path = root / name
        try:
            with Image.open(path) as img:
                arr = np.asarray(img.convert("RGBA"))
        except (OSError, SyntaxError) as exc:
            raise DataError(f"cannot read atlas {path}: {exc}") from exc
        if arr.shape[:2] != (expect_h, expect_w):
            raise DataError(
                f"{path}: atlas is {arr.shape[1]}x{arr.shape[0]} but the "
                f"manifest says {expect_w}x{expect_h}")
        return arr

    st = manifest["static_atlas"]
    static = read_atlas(st["file"], st["width"], st["height"])
    dyn = manifest["dynamic_atlas"]
    frames = [read_atlas(name, dyn["width"], dyn["height"])
              for name in dyn["files"]]
    return AtlasBundle(static_atlas=static, dynamic_frames=frames,
                       manifest=manifest)
