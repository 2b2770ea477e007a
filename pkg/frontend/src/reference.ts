/** Software renderer: the exact math of the training-side renderer, used by
 * the test-suite for parity checks and as a canvas fallback.
 *
 * Planes are materialized from atlas texels, warped into the target view by
 * per-plane homographies (bilinear, zero outside), and blended back to
 * front with the over operator on straight alpha.
 */

import type { BundleManifest } from "./manifest.js";
import {
  Mat3,
  PinholeCamera,
  mat3MulVec,
  planeHomography,
  resizedCamera,
} from "./math.js";

export interface AtlasData {
  width: number;
  height: number;
  data: Uint8Array; // RGBA, row-major
}

export interface BundleData {
  manifest: BundleManifest;
  staticAtlas: AtlasData;
  dynamicFrames: AtlasData[];
}

/** Dense RGBA planes (float in [0, 1]) for frame (t mod T). */
export function materializePlanes(bundle: BundleData, t: number): Float32Array[] {
  const man = bundle.manifest;
  const ts = man.tileSize;
  const [rows, cols] = man.grid;
  const planeW = cols * ts;
  const planeH = rows * ts;
  const frame = ((t % man.numFrames) + man.numFrames) % man.numFrames;
  const planes: Float32Array[] = [];
  for (let d = 0; d < man.depths.length; d++) {
    planes.push(new Float32Array(planeW * planeH * 4));
  }
  for (const tile of man.tiles) {
    const atlas = tile.label === "static" ? bundle.staticAtlas
      : bundle.dynamicFrames[frame];
    const [rx, ry] = tile.rect;
    const plane = planes[tile.plane];
    for (let y = 0; y < ts; y++) {
      const srcRow = (ry + y) * atlas.width + rx;
      const dstRow = (tile.row * ts + y) * planeW + tile.col * ts;
      for (let x = 0; x < ts; x++) {
        for (let c = 0; c < 4; c++) {
          plane[(dstRow + x) * 4 + c] = atlas.data[(srcRow + x) * 4 + c] / 255;
        }
      }
    }
  }
  return planes;
}

function samplePlane(plane: Float32Array, planeW: number, planeH: number,
                     x: number, y: number, out: Float32Array): void {
  out.fill(0);
  const x0 = Math.floor(x);
  const y0 = Math.floor(y);
  const wx = x - x0;
  const wy = y - y0;
  for (let dy = 0; dy <= 1; dy++) {
    const yy = y0 + dy;
    if (yy < 0 || yy >= planeH) continue;
    const fy = dy === 0 ? 1 - wy : wy;
    for (let dx = 0; dx <= 1; dx++) {
      const xx = x0 + dx;
      if (xx < 0 || xx >= planeW) continue;
      const w = fy * (dx === 0 ? 1 - wx : wx);
      const idx = (yy * planeW + xx) * 4;
      out[0] += w * plane[idx];
      out[1] += w * plane[idx + 1];
      out[2] += w * plane[idx + 2];
      out[3] += w * plane[idx + 3];
    }
  }
}

/** Render frame t of the bundle from an arbitrary camera; returns RGB
 * (height * width * 3) floats in [0, 1]. */
export function renderReference(bundle: BundleData, camera: PinholeCamera,
                                t: number): Float32Array {
  const man = bundle.manifest;
  const scale = man.tileSize / man.baseTileSize;
  const texelCamera = resizedCamera(man.camera, scale, scale);
  const planes = materializePlanes(bundle, t);
  const [rows, cols] = man.grid;
  const planeW = cols * man.tileSize;
  const planeH = rows * man.tileSize;
  const w = camera.width;
  const h = camera.height;
  const out = new Float32Array(w * h * 3);
  const sample = new Float32Array(4);

  // far to near
  for (let d = man.depths.length - 1; d >= 0; d--) {
    const hom: Mat3 = planeHomography(texelCamera, camera, man.depths[d]);
    const plane = planes[d];
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        const p = mat3MulVec(hom, [x, y, 1]);
        if (Math.abs(p[2]) < 1e-12) continue;
        samplePlane(plane, planeW, planeH, p[0] / p[2], p[1] / p[2], sample);
        const alpha = sample[3];
        if (alpha === 0) continue;
        const idx = (y * w + x) * 3;
        out[idx] = sample[0] * alpha + out[idx] * (1 - alpha);
        out[idx + 1] = sample[1] * alpha + out[idx + 1] * (1 - alpha);
        out[idx + 2] = sample[2] * alpha + out[idx + 2] * (1 - alpha);
      }
    }
  }
  return out;
}
