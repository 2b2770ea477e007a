/** Parsing and validation of the mtv-bundle/1 manifest. */

import type { Mat3, PinholeCamera, Vec3 } from "./math.js";

export const BUNDLE_VERSION = "mtv-bundle/1";

export interface TileRecord {
  plane: number;
  row: number;
  col: number;
  label: "static" | "loop";
  rect: [number, number, number, number]; // x, y, w, h in the tile's atlas
}

export interface AtlasInfo {
  file: string;
  width: number;
  height: number;
}

export interface BundleManifest {
  version: string;
  tileSize: number;
  baseTileSize: number;
  numFrames: number;
  depths: number[];
  grid: [number, number]; // rows, cols per plane
  camera: PinholeCamera;
  staticAtlas: AtlasInfo;
  dynamicAtlas: { files: string[]; width: number; height: number };
  tiles: TileRecord[];
}

function asNumber(v: unknown, name: string): number {
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new Error(`manifest field ${name} is not a finite number`);
  }
  return v;
}

export function parseCamera(obj: any): PinholeCamera {
  const pose = obj?.world_to_camera;
  if (!Array.isArray(pose) || pose.length !== 3 ||
      pose.some((row: unknown) => !Array.isArray(row) || row.length !== 4)) {
    throw new Error("camera world_to_camera must be a 3x4 matrix");
  }
  const rotation: Mat3 = [
    pose[0][0], pose[0][1], pose[0][2],
    pose[1][0], pose[1][1], pose[1][2],
    pose[2][0], pose[2][1], pose[2][2],
  ];
  const translation: Vec3 = [pose[0][3], pose[1][3], pose[2][3]];
  return {
    fx: asNumber(obj.fx, "camera.fx"),
    fy: asNumber(obj.fy, "camera.fy"),
    cx: asNumber(obj.cx, "camera.cx"),
    cy: asNumber(obj.cy, "camera.cy"),
    width: asNumber(obj.width, "camera.width"),
    height: asNumber(obj.height, "camera.height"),
    rotation,
    translation,
  };
}

export function parseManifest(obj: any): BundleManifest {
  if (!obj || typeof obj !== "object") throw new Error("manifest is not an object");
  if (obj.version !== BUNDLE_VERSION) {
    throw new Error(`unsupported bundle version ${String(obj.version)}`);
  }
  const tileSize = asNumber(obj.tile_size, "tile_size");
  const man: BundleManifest = {
    version: obj.version,
    tileSize,
    baseTileSize: asNumber(obj.base_tile_size, "base_tile_size"),
    numFrames: asNumber(obj.num_frames, "num_frames"),
    depths: (obj.depths as unknown[]).map((d, i) => asNumber(d, `depths[${i}]`)),
    grid: [asNumber(obj.grid?.[0], "grid[0]"), asNumber(obj.grid?.[1], "grid[1]")],
    camera: parseCamera(obj.camera),
    staticAtlas: {
      file: String(obj.static_atlas?.file ?? "static.png"),
      width: asNumber(obj.static_atlas?.width, "static_atlas.width"),
      height: asNumber(obj.static_atlas?.height, "static_atlas.height"),
    },
    dynamicAtlas: {
      files: (obj.dynamic_atlas?.files ?? []).map(String),
      width: asNumber(obj.dynamic_atlas?.width, "dynamic_atlas.width"),
      height: asNumber(obj.dynamic_atlas?.height, "dynamic_atlas.height"),
    },
    tiles: [],
  };
  if (man.dynamicAtlas.files.length !== man.numFrames) {
    throw new Error("dynamic atlas frame count does not match num_frames");
  }
  for (const rec of obj.tiles ?? []) {
    if (rec.label !== "static" && rec.label !== "loop") {
      throw new Error(`unknown tile label ${String(rec.label)}`);
    }
    const rect = rec.rect;
    if (!Array.isArray(rect) || rect.length !== 4) {
      throw new Error("tile rect must have 4 entries");
    }
    const atlas = rec.label === "static" ? man.staticAtlas : man.dynamicAtlas;
    const [x, y, w, h] = rect;
    if (w !== tileSize || h !== tileSize) {
      throw new Error(`tile rect ${rect} has the wrong size`);
    }
    if (x < 0 || y < 0 || x + w > atlas.width || y + h > atlas.height) {
      throw new Error(`tile rect ${rect} lies outside the ${rec.label} atlas`);
    }
    man.tiles.push({
      plane: asNumber(rec.plane, "tile.plane"),
      row: asNumber(rec.row, "tile.row"),
      col: asNumber(rec.col, "tile.col"),
      label: rec.label,
      rect: [x, y, w, h],
    });
  }
  return man;
}
