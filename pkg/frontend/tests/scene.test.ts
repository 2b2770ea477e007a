import { describe, expect, it } from "vitest";

import { buildScene, drawBatches } from "../src/scene.js";
import { projectPoint } from "../src/math.js";
import { loadFixture } from "./fixture.js";

describe("scene building", () => {
  it("positions each quad on its plane at the tile's pixel footprint", () => {
    const fx = loadFixture();
    const scene = buildScene(fx.manifest);
    const ts = fx.manifest.tileSize;
    for (const quad of scene.quads) {
      // reprojecting the corners through the texel-space reference camera
      // must land exactly on the tile's texel-area bounds at the plane depth
      const tl = projectPoint(scene.texelCamera, quad.corners[0]);
      const br = projectPoint(scene.texelCamera, quad.corners[3]);
      expect(tl[0]).toBeCloseTo(quad.tile.col * ts - 0.5, 9);
      expect(tl[1]).toBeCloseTo(quad.tile.row * ts - 0.5, 9);
      expect(br[0]).toBeCloseTo((quad.tile.col + 1) * ts - 0.5, 9);
      expect(br[1]).toBeCloseTo((quad.tile.row + 1) * ts - 0.5, 9);
      expect(tl[2]).toBeCloseTo(quad.depth, 9);
      expect(br[2]).toBeCloseTo(quad.depth, 9);
    }
  });

  it("maps atlas rect corners to quad corners exactly", () => {
    const fx = loadFixture();
    const scene = buildScene(fx.manifest);
    for (const quad of scene.quads) {
      const atlas = quad.tile.label === "static"
        ? fx.manifest.staticAtlas : fx.manifest.dynamicAtlas;
      const [x, y, w, h] = quad.tile.rect;
      expect(quad.uv[0]).toBeCloseTo(x / atlas.width, 12);
      expect(quad.uv[1]).toBeCloseTo(y / atlas.height, 12);
      expect(quad.uv[2]).toBeCloseTo((x + w) / atlas.width, 12);
      expect(quad.uv[3]).toBeCloseTo((y + h) / atlas.height, 12);
    }
  });

  it("sorts quads strictly far to near", () => {
    const fx = loadFixture();
    const scene = buildScene(fx.manifest);
    for (let i = 1; i < scene.quads.length; i++) {
      expect(scene.quads[i].depth).toBeLessThanOrEqual(scene.quads[i - 1].depth);
    }
  });

  it("draw batches never split a depth and preserve order", () => {
    const fx = loadFixture();
    const scene = buildScene(fx.manifest);
    const batches = drawBatches(scene);
    const flattened = batches.flatMap((b) => b.quads);
    expect(flattened).toEqual(scene.quads);
    for (const batch of batches) {
      const kinds = new Set(batch.quads.map((q) => q.tile.label));
      expect(kinds.size).toBe(1);
      const depths = new Set(batch.quads.map((q) => q.depth));
      expect(depths.size).toBe(1);
    }
  });
});
