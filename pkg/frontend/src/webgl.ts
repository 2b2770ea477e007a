/** WebGL2 rasterizer: one textured quad per tile, drawn far to near with
 * standard over blending (straight alpha). Mathematically equivalent to the
 * per-plane homography warp of the software reference for fronto-parallel
 * quads; UVs are clamped half a texel inside the tile's atlas rect so
 * bilinear filtering never bleeds across slots.
 */

import type { SceneData, TileQuad } from "./scene.js";
import { drawBatches } from "./scene.js";
import { PinholeCamera, cameraCenter, mat3MulVec } from "./math.js";

const VERT = `#version 300 es
layout(location=0) in vec3 aPos;
layout(location=1) in vec2 aUv;
layout(location=2) in vec4 aRect;
uniform mat4 uViewProj;
out vec2 vUv;
flat out vec4 vRect;
void main() {
  vUv = aUv;
  vRect = aRect;
  gl_Position = uViewProj * vec4(aPos, 1.0);
}`;

const FRAG = `#version 300 es
precision highp float;
in vec2 vUv;
flat in vec4 vRect;
uniform sampler2D uTex;
out vec4 color;
void main() {
  vec2 uv = clamp(vUv, vRect.xy, vRect.zw);
  vec4 texel = texture(uTex, uv);
  color = vec4(texel.rgb * texel.a, texel.a); // premultiply for the blender
}`;

function compile(gl: WebGL2RenderingContext, kind: number, src: string) {
  const shader = gl.createShader(kind);
  if (!shader) throw new Error("cannot create shader");
  gl.shaderSource(shader, src);
  gl.compileShader(shader);
  if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
    throw new Error(gl.getShaderInfoLog(shader) ?? "shader compile failed");
  }
  return shader;
}

function quadVertices(quad: TileQuad, halfTexelU: number, halfTexelV: number,
                      out: number[]): void {
  const [u0, v0, u1, v1] = quad.uv;
  const rect = [u0 + halfTexelU, v0 + halfTexelV, u1 - halfTexelU, v1 - halfTexelV];
  const corners = quad.corners; // TL TR BL BR
  const uvs = [[u0, v0], [u1, v0], [u0, v1], [u1, v1]];
  const order = [0, 2, 1, 1, 2, 3]; // two CCW triangles
  for (const i of order) {
    out.push(corners[i][0], corners[i][1], corners[i][2],
             uvs[i][0], uvs[i][1], rect[0], rect[1], rect[2], rect[3]);
  }
}

/** Column-major 4x4 projection*view from a pinhole camera. */
export function viewProjection(cam: PinholeCamera, near: number,
                               far: number): Float32Array {
  const r = cam.rotation;
  const t = cam.translation;
  // camera pixel rays to clip space: x_ndc = (2/(w))*(fx X/Z + cx + 0.5) - 1
  const sx = 2 / cam.width;
  const sy = 2 / cam.height;
  const a = (far + near) / (far - near);
  const b = -2 * far * near / (far - near);
  // row-major projection applied to camera coordinates
  const proj = [
    cam.fx * sx, 0, (cam.cx + 0.5) * sx - 1, 0,
    0, cam.fy * sy, (cam.cy + 0.5) * sy - 1, 0,
    0, 0, a, b,
    0, 0, 1, 0,
  ];
  const view = [
    r[0], r[1], r[2], t[0],
    r[3], r[4], r[5], t[1],
    r[6], r[7], r[8], t[2],
    0, 0, 0, 1,
  ];
  const m = new Float32Array(16);
  for (let row = 0; row < 4; row++) {
    for (let col = 0; col < 4; col++) {
      let acc = 0;
      for (let k = 0; k < 4; k++) acc += proj[row * 4 + k] * view[k * 4 + col];
      m[col * 4 + row] = acc; // transpose into column-major
    }
  }
  return m;
}

interface BatchBuffers {
  isLoop: boolean;
  vao: WebGLVertexArrayObject;
  count: number;
}

export class WebglViewer {
  private readonly gl: WebGL2RenderingContext;
  private readonly program: WebGLProgram;
  private readonly batches: BatchBuffers[] = [];
  private readonly staticTex: WebGLTexture;
  private readonly dynamicTex: WebGLTexture[] = [];
  private readonly uViewProj: WebGLUniformLocation;
  readonly near: number;
  readonly far: number;

  constructor(gl: WebGL2RenderingContext, scene: SceneData,
              staticImage: TexImageSource, dynamicImages: TexImageSource[]) {
    this.gl = gl;
    const program = gl.createProgram();
    if (!program) throw new Error("cannot create program");
    gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, VERT));
    gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, FRAG));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(program) ?? "link failed");
    }
    this.program = program;
    const loc = gl.getUniformLocation(program, "uViewProj");
    if (!loc) throw new Error("missing uniform");
    this.uViewProj = loc;

    this.staticTex = this.upload(staticImage);
    for (const img of dynamicImages) this.dynamicTex.push(this.upload(img));

    const man = scene.manifest;
    const depths = man.depths;
    this.near = depths[0] * 0.25;
    this.far = depths[depths.length - 1] * 4;
    for (const batch of drawBatches(scene)) {
      const atlas = batch.isLoop ? man.dynamicAtlas : man.staticAtlas;
      const verts: number[] = [];
      for (const quad of batch.quads) {
        quadVertices(quad, 0.5 / atlas.width, 0.5 / atlas.height, verts);
      }
      const vao = gl.createVertexArray();
      if (!vao) throw new Error("cannot create vao");
      gl.bindVertexArray(vao);
      const vbo = gl.createBuffer();
      gl.bindBuffer(gl.ARRAY_BUFFER, vbo);
      gl.bufferData(gl.ARRAY_BUFFER, new Float32Array(verts), gl.STATIC_DRAW);
      const stride = 9 * 4;
      gl.enableVertexAttribArray(0);
      gl.vertexAttribPointer(0, 3, gl.FLOAT, false, stride, 0);
      gl.enableVertexAttribArray(1);
      gl.vertexAttribPointer(1, 2, gl.FLOAT, false, stride, 12);
      gl.enableVertexAttribArray(2);
      gl.vertexAttribPointer(2, 4, gl.FLOAT, false, stride, 20);
      this.batches.push({ isLoop: batch.isLoop, vao,
                          count: batch.quads.length * 6 });
    }
    gl.bindVertexArray(null);
  }

  private upload(image: TexImageSource): WebGLTexture {
    const gl = this.gl;
    const tex = gl.createTexture();
    if (!tex) throw new Error("cannot create texture");
    gl.bindTexture(gl.TEXTURE_2D, tex);
    gl.pixelStorei(gl.UNPACK_PREMULTIPLY_ALPHA_WEBGL, false);
    gl.texImage2D(gl.TEXTURE_2D, 0, gl.RGBA, gl.RGBA, gl.UNSIGNED_BYTE, image);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
    return tex;
  }

  /** Draw frame (t mod T) from the camera; quads blend far to near. */
  draw(camera: PinholeCamera, t: number): void {
    const gl = this.gl;
    gl.viewport(0, 0, gl.drawingBufferWidth, gl.drawingBufferHeight);
    gl.clearColor(0, 0, 0, 1);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.disable(gl.DEPTH_TEST);
    gl.enable(gl.BLEND);
    // premultiplied-over: the shader outputs premultiplied rgb
    gl.blendFunc(gl.ONE, gl.ONE_MINUS_SRC_ALPHA);
    gl.useProgram(this.program);
    gl.uniformMatrix4fv(this.uViewProj, false,
                        viewProjection(camera, this.near, this.far));
    const frame = ((t % this.dynamicTex.length) + this.dynamicTex.length)
      % Math.max(1, this.dynamicTex.length);
    for (const batch of this.batches) {
      gl.bindVertexArray(batch.vao);
      gl.bindTexture(gl.TEXTURE_2D,
                     batch.isLoop ? this.dynamicTex[frame] : this.staticTex);
      gl.drawArrays(gl.TRIANGLES, 0, batch.count);
    }
    gl.bindVertexArray(null);
  }
}

/** Keep quads in front of the camera visible: true when the camera sits
 * outside the slab of plane depths (used to clamp degenerate orbits). */
export function cameraOutsidePlanes(scene: SceneData,
                                    camera: PinholeCamera): boolean {
  const center = cameraCenter(camera);
  const refRot = scene.refCamera.rotation;
  const refTrans = scene.refCamera.translation;
  const inRef = mat3MulVec(refRot, center);
  const z = inRef[2] + refTrans[2];
  return z < scene.manifest.depths[0];
}
