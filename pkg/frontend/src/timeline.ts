/** Timeline model: two code tracks over a shared frame axis.
 *
 * One top block spans 8 motion frames and sits over exactly two bottom
 * blocks of 4 frames each; the "unit" (one top + its two bottom steps) is
 * the atomic granule the edit gestures work in.
 */

import type { SessionCodes } from "./types.js";

export const TOP_FRAMES = 8;
export const BOTTOM_FRAMES = 4;

export interface TimelineBlock {
  /** position within its own track */
  index: number;
  /** codebook entry id */
  code: number;
  startFrame: number;
  frames: number;
}

export interface TimelineModel {
  topTrack: TimelineBlock[];
  bottomTrack: TimelineBlock[];
  units: number;
  totalFrames: number;
  selection: { start: number; end: number } | null;
}

export function buildTimeline(codes: SessionCodes): TimelineModel {
  if (codes.bottom.length !== 2 * codes.top.length) {
    throw new Error(
      `code tracks out of ratio: ${codes.top.length} top vs ${codes.bottom.length} bottom`,
    );
  }
  const topTrack = codes.top.map((code, index) => ({
    index,
    code,
    startFrame: index * TOP_FRAMES,
    frames: TOP_FRAMES,
  }));
  const bottomTrack = codes.bottom.map((code, index) => ({
    index,
    code,
    startFrame: index * BOTTOM_FRAMES,
    frames: BOTTOM_FRAMES,
  }));
  return {
    topTrack,
    bottomTrack,
    units: codes.top.length,
    totalFrames: codes.top.length * TOP_FRAMES,
    selection: null,
  };
}

export function selectUnits(model: TimelineModel, start: number, end: number): TimelineModel {
  if (start < 0 || end > model.units || start >= end) {
    throw new Error(`selection [${start}, ${end}) out of bounds for ${model.units} units`);
  }
  return { ...model, selection: { start, end } };
}

export function clearSelection(model: TimelineModel): TimelineModel {
  return { ...model, selection: null };
}

/** Unit index under a frame position (for scrub-to-block highlighting). */
export function unitAtFrame(model: TimelineModel, frame: number): number {
  return Math.min(Math.max(Math.floor(frame / TOP_FRAMES), 0), model.units - 1);
}

/** The two bottom blocks aligned with a top-track unit. */
export function bottomBlocksOfUnit(model: TimelineModel, unit: number): TimelineBlock[] {
  return model.bottomTrack.slice(2 * unit, 2 * unit + 2);
}
