/** Gesture-to-edit mapping: every UI gesture yields exactly one EditOp list,
 * ready to POST. No client-side decoding or model math happens here. */

import type { CodeLevel, EditOp, SessionCodes } from "./types.js";

export function replaceBlock(level: CodeLevel, index: number, code: number): EditOp {
  return {
    kind: "replace",
    target: { level, range: [index, index + 1] },
    payload: [code],
  };
}

export function deleteUnits(start: number, end: number): EditOp {
  return { kind: "delete", target: { level: null, range: [start, end] } };
}

export function insertUnit(at: number, top: number[], bottom: number[]): EditOp {
  if (bottom.length !== 2 * top.length) {
    throw new Error(`insert payload needs two bottom codes per top code`);
  }
  return {
    kind: "insert",
    target: { level: null, range: [at, at] },
    payload: { top, bottom },
  };
}

/** Drag a unit from one position to another (both in unit coordinates). */
export function moveUnit(from: number, to: number): EditOp {
  const lo = Math.min(from, to);
  const hi = Math.max(from, to) + 1;
  const size = hi - lo;
  const perm: number[] = [];
  for (let i = 0; i < size; i++) perm.push(i);
  perm.splice(from - lo, 1);
  perm.splice(to - lo, 0, from - lo);
  return { kind: "reorder", target: { level: null, range: [lo, hi] }, payload: perm };
}

export function reorderUnits(start: number, end: number, permutation: number[]): EditOp {
  return { kind: "reorder", target: { level: null, range: [start, end] }, payload: permutation };
}

/** Swap one whole level in from a donor session (style/pose transfer). */
export function swapLevelFromDonor(level: CodeLevel, donor: SessionCodes): EditOp {
  return {
    kind: level === "top" ? "swap_top" : "swap_bottom",
    target: { level, range: [0, level === "top" ? donor.top.length : donor.bottom.length] },
    payload: level === "top" ? [...donor.top] : [...donor.bottom],
  };
}
