/** Scene construction: one textured quad per tile, positioned on its depth
 * plane inside the reference-camera frustum.
 *
 * Tile texels live on the scaled reference pixel grid (scale = tileSize /
 * baseTileSize). A tile at (row, col) covers the texel area
 * [col*ts - 0.5, (col+1)*ts - 0.5] x [row*ts - 0.5, (row+1)*ts - 0.5];
 * its four corners are unprojected at the plane depth. UVs map the quad
 * corners to the tile's atlas rectangle corners.
 */

import type { BundleManifest, TileRecord } from "./manifest.js";
import {
  PinholeCamera,
  Vec3,
  resizedCamera,
  unprojectPixel,
} from "./math.js";

export interface TileQuad {
  tile: TileRecord;
  depth: number;
  corners: [Vec3, Vec3, Vec3, Vec3]; // TL, TR, BL, BR in world space
  uv: [number, number, number, number]; // u0, v0, u1, v1 in the atlas
}

export interface SceneData {
  manifest: BundleManifest;
  refCamera: PinholeCamera;       // original reference camera
  texelCamera: PinholeCamera;     // reference camera in texel units
  quads: TileQuad[];              // sorted far to near
}

export function buildScene(man: BundleManifest): SceneData {
  const scale = man.tileSize / man.baseTileSize;
  const texelCamera = resizedCamera(man.camera, scale, scale);
  const ts = man.tileSize;
  const quads: TileQuad[] = [];
  for (const tile of man.tiles) {
    const depth = man.depths[tile.plane];
    if (depth === undefined) throw new Error(`tile plane ${tile.plane} out of range`);
    const x0 = tile.col * ts - 0.5;
    const x1 = (tile.col + 1) * ts - 0.5;
    const y0 = tile.row * ts - 0.5;
    const y1 = (tile.row + 1) * ts - 0.5;
    const corners: [Vec3, Vec3, Vec3, Vec3] = [
      unprojectPixel(texelCamera, x0, y0, depth),
      unprojectPixel(texelCamera, x1, y0, depth),
      unprojectPixel(texelCamera, x0, y1, depth),
      unprojectPixel(texelCamera, x1, y1, depth),
    ];
    const atlas = tile.label === "static" ? man.staticAtlas : man.dynamicAtlas;
    const [rx, ry, rw, rh] = tile.rect;
    const uv: [number, number, number, number] = [
      rx / atlas.width, ry / atlas.height,
      (rx + rw) / atlas.width, (ry + rh) / atlas.height,
    ];
    quads.push({ tile, depth, corners, uv });
  }
  // painter's order: far planes first, stable within a plane
  quads.sort((a, b) => b.depth - a.depth ||
    a.tile.row - b.tile.row || a.tile.col - b.tile.col);
  return { manifest: man, refCamera: man.camera, texelCamera, quads };
}

/** Stable draw batches: consecutive quads of one plane and one atlas kind. */
export interface DrawBatch {
  isLoop: boolean;
  quads: TileQuad[];
}

export function drawBatches(scene: SceneData): DrawBatch[] {
  const batches: DrawBatch[] = [];
  let current: DrawBatch | null = null;
  let currentDepth = NaN;
  for (const quad of scene.quads) {
    const isLoop = quad.tile.label === "loop";
    if (!current || current.isLoop !== isLoop || quad.depth !== currentDepth) {
      current = { isLoop, quads: [] };
      currentDepth = quad.depth;
      batches.push(current);
    }
    current.quads.push(quad);
  }
  return batches;
}
