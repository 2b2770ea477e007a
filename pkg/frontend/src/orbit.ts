/** Orbit camera: azimuth/elevation/radius around a target point, seeded from
 * the bundle's reference camera so the initial view reproduces it exactly.
 */

import {
  Mat3,
  PinholeCamera,
  Vec3,
  cameraCenter,
  mat3Mul,
  mat3MulVec,
  mat3Transpose,
  rotationX,
  rotationY,
  vec3Add,
  vec3Scale,
  vec3Sub,
} from "./math.js";

export interface OrbitState {
  azimuth: number;    // radians, yaw around the reference up axis
  elevation: number;  // radians, pitch
  radius: number;
  target: Vec3;
}

const MAX_ELEVATION = Math.PI / 2 - 1e-3;

export class OrbitCamera {
  state: OrbitState;
  private readonly reference: PinholeCamera;

  constructor(reference: PinholeCamera, targetDepth: number) {
    this.reference = reference;
    const center = cameraCenter(reference);
    const forward = mat3MulVec(mat3Transpose(reference.rotation), [0, 0, 1]);
    this.state = {
      azimuth: 0,
      elevation: 0,
      radius: targetDepth,
      target: vec3Add(center, vec3Scale(forward, targetDepth)),
    };
  }

  reset(): void {
    const fresh = new OrbitCamera(this.reference, this.state.radius);
    this.state = { ...fresh.state, radius: this.state.radius };
    this.state.target = fresh.state.target;
  }

  rotate(dAzimuth: number, dElevation: number): void {
    this.state.azimuth += dAzimuth;
    this.state.elevation = Math.min(MAX_ELEVATION,
      Math.max(-MAX_ELEVATION, this.state.elevation + dElevation));
  }

  zoom(factor: number): void {
    this.state.radius = Math.max(1e-3, this.state.radius * factor);
  }

  pan(dx: number, dy: number): void {
    // move the target in the current camera's image plane
    const rot = this.rotationWorldToCamera();
    const right = mat3MulVec(mat3Transpose(rot), [1, 0, 0]);
    const down = mat3MulVec(mat3Transpose(rot), [0, 1, 0]);
    this.state.target = vec3Add(this.state.target,
      vec3Add(vec3Scale(right, dx), vec3Scale(down, dy)));
  }

  rotationWorldToCamera(): Mat3 {
    // azimuth/elevation applied in the reference camera's frame so that
    // (0, 0) reproduces the reference orientation exactly
    return mat3Mul(rotationX(this.state.elevation),
                   mat3Mul(rotationY(this.state.azimuth),
                           this.reference.rotation));
  }

  toCamera(): PinholeCamera {
    const rot = this.rotationWorldToCamera();
    const forward = mat3MulVec(mat3Transpose(rot), [0, 0, 1]);
    const eye = vec3Sub(this.state.target,
                        vec3Scale(forward, this.state.radius));
    const translation = vec3Scale(mat3MulVec(rot, eye), -1);
    return {
      fx: this.reference.fx,
      fy: this.reference.fy,
      cx: this.reference.cx,
      cy: this.reference.cy,
      width: this.reference.width,
      height: this.reference.height,
      rotation: rot,
      translation,
    };
  }
}
