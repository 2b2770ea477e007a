/** Playback state: frame index advances modulo the loop length, so time is
 * stateless (scrubbing to t equals playing to t). */

export class Player {
  playing = false;
  fps: number;
  private readonly numFrames: number;
  private position = 0; // fractional frame cursor

  constructor(numFrames: number, fps = 25) {
    this.numFrames = numFrames;
    this.fps = fps;
  }

  get frame(): number {
    return ((Math.floor(this.position) % this.numFrames) + this.numFrames)
      % this.numFrames;
  }

  advance(dtSeconds: number): void {
    if (!this.playing) return;
    this.position = (this.position + dtSeconds * this.fps) % this.numFrames;
  }

  scrub(frame: number): void {
    this.position = frame % this.numFrames;
  }

  toggle(): void {
    this.playing = !this.playing;
  }
}
