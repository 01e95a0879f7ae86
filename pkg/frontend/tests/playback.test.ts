import { describe, expect, it } from "vitest";

import { PlaybackClock, SyncController } from "../src/playback.js";

describe("PlaybackClock", () => {
  it("advances at fps while playing and wraps", () => {
    const clock = new PlaybackClock(120, 60);
    clock.play(1000);
    expect(clock.frameAt(1000)).toBe(0);
    expect(clock.frameAt(1500)).toBe(30);
    expect(clock.frameAt(3000)).toBe(0); // 120 frames = 2 s, wrapped
    expect(clock.frameAt(3016.7)).toBe(1);
  });

  it("holds the frame while paused", () => {
    const clock = new PlaybackClock(100, 60);
    clock.play(0);
    clock.pause(500);
    expect(clock.frameAt(9999)).toBe(30);
  });

  it("scrubs to an absolute frame", () => {
    const clock = new PlaybackClock(100, 60);
    clock.scrubTo(42, 0);
    expect(clock.frameAt(0)).toBe(42);
    clock.play(0);
    expect(clock.frameAt(100)).toBe(48);
  });
});

describe("SyncController", () => {
  it("keeps two clocks scrub-synchronized within one frame", () => {
    const a = new PlaybackClock(512, 60);
    const b = new PlaybackClock(512, 60);
    const sync = new SyncController();
    sync.attach(a);
    sync.attach(b);

    sync.scrubTo(100, 0);
    expect(sync.maxSkew(0)).toBe(0);

    sync.play(0);
    for (const now of [16.7, 250, 997, 4321]) {
      expect(sync.maxSkew(now)).toBeLessThanOrEqual(1);
    }
    sync.pause(5000);
    expect(sync.maxSkew(6000)).toBeLessThanOrEqual(1);

    sync.scrubTo(7, 6000);
    expect(a.frameAt(6000)).toBe(7);
    expect(b.frameAt(6000)).toBe(7);
  });
});
