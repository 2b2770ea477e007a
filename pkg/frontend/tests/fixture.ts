import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import { BundleManifest, parseCamera, parseManifest } from "../src/manifest.js";
import type { PinholeCamera } from "../src/math.js";
import type { AtlasData, BundleData } from "../src/reference.js";

export interface RenderFixture {
  height: number;
  width: number;
  rgb: Float32Array;
}

export interface Fixture {
  raw: any;
  manifest: BundleManifest;
  bundle: BundleData;
  cameras: { reference: PinholeCamera; side: PinholeCamera };
  renders: Record<string, RenderFixture>;
}

function bytes(b64: string): Uint8Array {
  return new Uint8Array(Buffer.from(b64, "base64"));
}

function atlas(b64: string, width: number, height: number): AtlasData {
  const data = bytes(b64);
  if (data.length !== width * height * 4) {
    throw new Error(`atlas payload is ${data.length} bytes, expected ${width * height * 4}`);
  }
  return { width, height, data };
}

export function loadFixture(): Fixture {
  const here = dirname(fileURLToPath(import.meta.url));
  const raw = JSON.parse(
    readFileSync(join(here, "fixtures", "bundle_fixture.json"), "utf-8"));
  const manifest = parseManifest(raw.manifest);
  const bundle: BundleData = {
    manifest,
    staticAtlas: atlas(raw.static_atlas_b64, manifest.staticAtlas.width,
                       manifest.staticAtlas.height),
    dynamicFrames: raw.dynamic_atlas_b64.map((b64: string) =>
      atlas(b64, manifest.dynamicAtlas.width, manifest.dynamicAtlas.height)),
  };
  const renders: Record<string, RenderFixture> = {};
  for (const [name, rec] of Object.entries<any>(raw.renders)) {
    const buf = bytes(rec.rgb_f32_b64);
    renders[name] = {
      height: rec.height,
      width: rec.width,
      rgb: new Float32Array(buf.buffer, buf.byteOffset, buf.length / 4),
    };
  }
  return {
    raw,
    manifest,
    bundle,
    cameras: {
      reference: parseCamera(raw.cameras.reference),
      side: parseCamera(raw.cameras.side),
    },
    renders,
  };
}
