#!/usr/bin/env python3
"""Generate the frontend test fixture: a small exported bundle plus the
CLI-side reference renders it must match.

Writes frontend/tests/fixtures/bundle_fixture.json with the manifest, the
atlas texels (base64 RGBA), two reference renders (base64 float32 RGB) and
the cameras used. Run from the repository root:

    python3 scripts/make_viewer_fixture.py
"""
import base64
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from mtvloop.atlas import pack, unpack
from mtvloop.geometry import CameraModel
from mtvloop.mtv import Mtv, Tile, TileLabel, classify_grid, subdivide
from mtvloop.renderer import LoopableVolume, Mpi, render_mtv
from mtvloop.scene_io import SceneSpec, make_synthetic_scene, _frame_planes

from conftest import make_scene_spec


def b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii")


def main() -> None:
    out_path = Path(__file__).resolve().parents[1] / "frontend" / "tests" / \
        "fixtures" / "bundle_fixture.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)

    period = 6
    spec = make_scene_spec(num_views=3, width=64, height=48, num_frames=period,
                           period=period, seed=11)
    import tempfile
    scene = make_synthetic_scene(spec, Path(tempfile.mkdtemp()) / "scene")

    # tiles straight from the ground truth: loop tiles carry the exact
    # animation frames, so the bundle is a faithful small looping scene
    grid = subdivide(scene.base_mpi,
                     LoopableVolume(values=scene.animation_volume), 16)
    labels = classify_grid(grid, tau_alpha=0.05, tau_loop=0.5)
    per_frame = [_frame_planes(spec, t) for t in range(period)]
    tiles = []
    rows, cols = grid.grid
    for plane in range(grid.rgba.shape[0]):
        for row in range(rows):
            for col in range(cols):
                label = TileLabel(int(labels[plane, row, col]))
                if label == TileLabel.EMPTY:
                    continue
                sl = (plane, slice(row * 16, (row + 1) * 16),
                      slice(col * 16, (col + 1) * 16))
                if label == TileLabel.STATIC:
                    tiles.append(Tile(plane, row, col, label,
                                      static_patch=grid.rgba[sl].copy()))
                else:
                    seq = np.stack([per_frame[t][sl] for t in range(period)])
                    tiles.append(Tile(plane, row, col, label, loop_patch=seq))
    mtv = Mtv(tiles=tiles, stack=scene.base_mpi.stack, tile_size=16,
              num_frames=period, grid=grid.grid)

    bundle = pack(mtv)
    decoded = unpack(bundle)

    ref_cam = spec.cameras[spec.reference_index]
    side_cam = spec.cameras[0]
    renders = {
        "t0_ref": render_mtv(decoded, ref_cam, 0),
        "t7_ref": render_mtv(decoded, ref_cam, 7),
        "t0_side": render_mtv(decoded, side_cam, 0),
    }

    fixture = {
        "manifest": bundle.manifest,
        "static_atlas_b64": b64(bundle.static_atlas),
        "dynamic_atlas_b64": [b64(f) for f in bundle.dynamic_frames],
        "cameras": {
            "reference": dict(ref_cam.to_json()),
            "side": dict(side_cam.to_json()),
        },
        "renders": {
            name: {
                "height": arr.shape[0],
                "width": arr.shape[1],
                "rgb_f32_b64": b64(arr.astype(np.float32)),
            } for name, arr in renders.items()
        },
    }
    out_path.write_text(json.dumps(fixture))
    print(f"wrote {out_path} ({out_path.stat().st_size / 1024:.0f} KiB, "
          f"{len(tiles)} tiles)")


if __name__ == "__main__":
    main()
