/** Small linear-algebra kit shared by the scene builder and both renderers.
 *
 * Conventions match the bundle producer: pixel coordinates are (x, y) =
 * (column, row) with centers at integers, poses are world-to-camera
 * (Xc = R * Xw + t), and the camera looks along +z.
 */

export type Vec3 = [number, number, number];
export type Mat3 = number[]; // row-major, 9 entries

export interface PinholeCamera {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
  rotation: Mat3;     // world -> camera
  translation: Vec3;
}

export function mat3Identity(): Mat3 {
  return [1, 0, 0, 0, 1, 0, 0, 0, 1];
}

export function mat3Mul(a: Mat3, b: Mat3): Mat3 {
  const out = new Array(9).fill(0);
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) {
      let acc = 0;
      for (let k = 0; k < 3; k++) acc += a[r * 3 + k] * b[k * 3 + c];
      out[r * 3 + c] = acc;
    }
  }
  return out;
}

export function mat3MulVec(a: Mat3, v: Vec3): Vec3 {
  return [
    a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
    a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
    a[6] * v[0] + a[7] * v[1] + a[8] * v[2],
  ];
}

export function mat3Transpose(a: Mat3): Mat3 {
  return [a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]];
}

export function mat3Inverse(a: Mat3): Mat3 {
  const [m00, m01, m02, m10, m11, m12, m20, m21, m22] = a;
  const c00 = m11 * m22 - m12 * m21;
  const c01 = m12 * m20 - m10 * m22;
  const c02 = m10 * m21 - m11 * m20;
  const det = m00 * c00 + m01 * c01 + m02 * c02;
  if (Math.abs(det) < 1e-18) throw new Error("singular matrix");
  const inv = 1 / det;
  return [
    c00 * inv, (m02 * m21 - m01 * m22) * inv, (m01 * m12 - m02 * m11) * inv,
    c01 * inv, (m00 * m22 - m02 * m20) * inv, (m02 * m10 - m00 * m12) * inv,
    c02 * inv, (m01 * m20 - m00 * m21) * inv, (m00 * m11 - m01 * m10) * inv,
  ];
}

export function vec3Add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function vec3Sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function vec3Scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function rotationX(angle: number): Mat3 {
  const c = Math.cos(angle), s = Math.sin(angle);
  return [1, 0, 0, 0, c, -s, 0, s, c];
}

export function rotationY(angle: number): Mat3 {
  const c = Math.cos(angle), s = Math.sin(angle);
  return [c, 0, s, 0, 1, 0, -s, 0, c];
}

export function intrinsics(cam: PinholeCamera): Mat3 {
  return [cam.fx, 0, cam.cx, 0, cam.fy, cam.cy, 0, 0, 1];
}

export function cameraCenter(cam: PinholeCamera): Vec3 {
  const rt = mat3Transpose(cam.rotation);
  return vec3Scale(mat3MulVec(rt, cam.translation), -1);
}

/** World point of the pixel (x, y) at camera depth z. */
export function unprojectPixel(cam: PinholeCamera, x: number, y: number,
                               z: number): Vec3 {
  const xc: Vec3 = [((x - cam.cx) / cam.fx) * z, ((y - cam.cy) / cam.fy) * z, z];
  return mat3MulVec(mat3Transpose(cam.rotation),
                    vec3Sub(xc, cam.translation));
}

/** Pixel coordinates (x, y, depth) of a world point. */
export function projectPoint(cam: PinholeCamera, p: Vec3): Vec3 {
  const xc = vec3Add(mat3MulVec(cam.rotation, p), cam.translation);
  return [cam.fx * (xc[0] / xc[2]) + cam.cx,
          cam.fy * (xc[1] / xc[2]) + cam.cy, xc[2]];
}

/** Camera for the same view at a resampled resolution (center aligned). */
export function resizedCamera(cam: PinholeCamera, sx: number,
                              sy: number): PinholeCamera {
  return {
    fx: cam.fx * sx,
    fy: cam.fy * sy,
    cx: (cam.cx + 0.5) * sx - 0.5,
    cy: (cam.cy + 0.5) * sy - 0.5,
    width: Math.max(1, Math.round(cam.width * sx)),
    height: Math.max(1, Math.round(cam.height * sy)),
    rotation: cam.rotation,
    translation: cam.translation,
  };
}

/** Homography mapping target-view pixels onto reference-plane texels for the
 * fronto-parallel plane z = depth in the reference camera frame. */
export function planeHomography(ref: PinholeCamera, tgt: PinholeCamera,
                                depth: number): Mat3 {
  const relRot = mat3Mul(tgt.rotation, mat3Transpose(ref.rotation));
  const relTrans = vec3Sub(tgt.translation,
                           mat3MulVec(relRot, ref.translation));
  const mid = relRot.slice() as Mat3;
  mid[2] += relTrans[0] / depth;
  mid[5] += relTrans[1] / depth;
  mid[8] += relTrans[2] / depth;
  const forward = mat3Mul(intrinsics(tgt),
                          mat3Mul(mid, mat3Inverse(intrinsics(ref))));
  const inv = mat3Inverse(forward);
  const w = inv[8];
  return Math.abs(w) > 1e-12 ? (inv.map((v) => v / w) as Mat3) : inv;
}

export function psnr(a: Float32Array | number[], b: Float32Array | number[],
                     peak = 1.0): number {
  let acc = 0;
  for (let i = 0; i < a.length; i++) {
    const d = a[i] - b[i];
    acc += d * d;
  }
  const mse = acc / a.length;
  if (mse === 0) return Infinity;
  return 10 * Math.log10((peak * peak) / mse);
}
