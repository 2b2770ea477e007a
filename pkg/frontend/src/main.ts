/** Browser entry point: fetch the bundle named by ?bundle=<url>, build the
 * scene and run the render loop with orbit + time controls. */

import { parseManifest } from "./manifest.js";
import { buildScene } from "./scene.js";
import { OrbitCamera } from "./orbit.js";
import { Player } from "./player.js";
import { WebglViewer } from "./webgl.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function setStatus(text: string, isError = false): void {
  const el = byId<HTMLDivElement>("status");
  el.textContent = text;
  el.classList.toggle("error", isError);
}

async function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.crossOrigin = "anonymous";
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`cannot load ${url}`));
    img.src = url;
  });
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const bundleUrl = params.get("bundle") ?? "bundle";
  const base = bundleUrl.endsWith("/") ? bundleUrl : bundleUrl + "/";
  setStatus("loading manifest ...");
  let manifestJson: unknown;
  try {
    const resp = await fetch(base + "manifest.json");
    if (!resp.ok) throw new Error(`HTTP ${resp.status}`);
    manifestJson = await resp.json();
  } catch (err) {
    setStatus(`failed to fetch bundle: ${(err as Error).message}`, true);
    return;
  }
  let manifest;
  try {
    manifest = parseManifest(manifestJson);
  } catch (err) {
    setStatus(`invalid bundle: ${(err as Error).message}`, true);
    return;
  }

  setStatus(`loading ${1 + manifest.dynamicAtlas.files.length} atlases ...`);
  let staticImg: HTMLImageElement;
  let dynamicImgs: HTMLImageElement[];
  try {
    staticImg = await loadImage(base + manifest.staticAtlas.file);
    dynamicImgs = await Promise.all(
      manifest.dynamicAtlas.files.map((f) => loadImage(base + f)));
  } catch (err) {
    setStatus((err as Error).message, true);
    return;
  }

  const scene = buildScene(manifest);
  const canvas = byId<HTMLCanvasElement>("view");
  canvas.width = manifest.camera.width * 2;
  canvas.height = manifest.camera.height * 2;
  const gl = canvas.getContext("webgl2");
  if (!gl) {
    setStatus("WebGL2 is not available in this browser", true);
    return;
  }
  const viewer = new WebglViewer(gl, scene, staticImg, dynamicImgs);
  const midDepth = manifest.depths[Math.floor(manifest.depths.length / 2)];
  const orbit = new OrbitCamera(manifest.camera, midDepth);
  const player = new Player(manifest.numFrames, 12);

  const slider = byId<HTMLInputElement>("frame");
  slider.max = String(manifest.numFrames - 1);
  const playBtn = byId<HTMLButtonElement>("play");
  playBtn.addEventListener("click", () => {
    player.toggle();
    playBtn.textContent = player.playing ? "pause" : "play";
  });
  slider.addEventListener("input", () => {
    player.playing = false;
    playBtn.textContent = "play";
    player.scrub(Number(slider.value));
  });
  byId<HTMLSelectElement>("fps").addEventListener("change", (ev) => {
    player.fps = Number((ev.target as HTMLSelectElement).value);
  });
  byId<HTMLButtonElement>("reset").addEventListener("click", () => orbit.reset());

  let dragging = false;
  let panning = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("mousedown", (ev) => {
    dragging = true;
    panning = ev.button === 2 || ev.shiftKey;
    lastX = ev.clientX;
    lastY = ev.clientY;
  });
  canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
  window.addEventListener("mouseup", () => { dragging = false; });
  window.addEventListener("mousemove", (ev) => {
    if (!dragging) return;
    const dx = ev.clientX - lastX;
    const dy = ev.clientY - lastY;
    lastX = ev.clientX;
    lastY = ev.clientY;
    if (panning) {
      const worldPerPixel = orbit.state.radius / manifest.camera.fx;
      orbit.pan(-dx * worldPerPixel, -dy * worldPerPixel);
    } else {
      orbit.rotate(dx * 0.005, dy * 0.005);
    }
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    orbit.zoom(Math.exp(ev.deltaY * 0.001));
  }, { passive: false });

  setStatus(`ready: ${manifest.tiles.length} tiles, T=${manifest.numFrames}`);
  let last = performance.now();
  function frame(now: number): void {
    player.advance((now - last) / 1000);
    last = now;
    slider.value = String(player.frame);
    viewer.draw(orbit.toCamera(), player.frame);
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

boot();
