/** Playback clock and scrub synchronization, independent of rendering. */

export class PlaybackClock {
  private playing = false;
  private startedAt = 0;
  private offsetFrames = 0;
  private listeners: Array<(frame: number) => void> = [];

  constructor(
    public readonly totalFrames: number,
    public readonly fps: number = 60,
  ) {}

  get isPlaying(): boolean {
    return this.playing;
  }

  /** Frame shown at wall-clock time nowMs (wraps around the clip). */
  frameAt(nowMs: number): number {
    if (this.totalFrames === 0) return 0;
    let frames = this.offsetFrames;
    if (this.playing) {
      frames += ((nowMs - this.startedAt) / 1000) * this.fps;
    }
    const wrapped = Math.floor(frames) % this.totalFrames;
    return wrapped < 0 ? wrapped + this.totalFrames : wrapped;
  }

  play(nowMs: number): void {
    if (this.playing) return;
    this.playing = true;
    this.startedAt = nowMs;
  }

  pause(nowMs: number): void {
    if (!this.playing) return;
    this.offsetFrames += ((nowMs - this.startedAt) / 1000) * this.fps;
    this.playing = false;
  }

  scrubTo(frame: number, nowMs: number): void {
    this.offsetFrames = frame;
    this.startedAt = nowMs;
    this.emit(this.frameAt(nowMs));
  }

  onFrame(fn: (frame: number) => void): void {
    this.listeners.push(fn);
  }

  private emit(frame: number): void {
    for (const fn of this.listeners) fn(frame);
  }
}

/** Locks any number of clocks to one scrub position and play state. */
export class SyncController {
  private clocks: PlaybackClock[] = [];

  attach(clock: PlaybackClock): void {
    this.clocks.push(clock);
  }

  scrubTo(frame: number, nowMs: number): void {
    for (const clock of this.clocks) clock.scrubTo(frame, nowMs);
  }

  play(nowMs: number): void {
    for (const clock of this.clocks) clock.play(nowMs);
  }

  pause(nowMs: number): void {
    for (const clock of this.clocks) clock.pause(nowMs);
  }

  /** Largest pairwise frame difference at nowMs; 0 when perfectly locked. */
  maxSkew(nowMs: number): number {
    if (this.clocks.length < 2) return 0;
    const frames = this.clocks.map((c) => c.frameAt(nowMs));
    return Math.max(...frames) - Math.min(...frames);
  }
}
