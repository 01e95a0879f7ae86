/** DOM renderer for the two-track timeline plus gesture wiring.
 *
 * Rendering is a pure function of the model; gestures surface as callbacks
 * carrying ready-to-send EditOps. Tool state decides what a click means.
 */

import { codeColor } from "./colors.js";
import { deleteUnits, moveUnit, replaceBlock } from "./gestures.js";
import type { TimelineModel } from "./timeline.js";
import type { CodeLevel, EditOp } from "./types.js";

export type Tool = "select" | "delete";

export interface TimelineHandlers {
  /** A gesture produced an edit; the host submits it and swaps sessions. */
  onEdit(ops: EditOp[]): void;
  /** A block was selected (select tool). */
  onSelect?(level: CodeLevel, index: number): void;
}

export interface TimelineState {
  tool: Tool;
  /** Selected block (palette replace target). */
  selected: { level: CodeLevel; index: number } | null;
  dragFrom: number | null;
}

export function initialState(): TimelineState {
  return { tool: "select", selected: null, dragFrom: null };
}

const PX_PER_FRAME = 2;

export function renderTimeline(
  container: HTMLElement,
  model: TimelineModel,
  state: TimelineState,
  handlers: TimelineHandlers,
): void {
  container.textContent = "";
  container.classList.add("timeline");

  for (const level of ["top", "bottom"] as CodeLevel[]) {
    const track = document.createElement("div");
    track.className = `track track-${level}`;
    track.dataset.level = level;
    const blocks = level === "top" ? model.topTrack : model.bottomTrack;
    for (const block of blocks) {
      const el = document.createElement("div");
      el.className = "block";
      el.dataset.level = level;
      el.dataset.index = String(block.index);
      el.dataset.code = String(block.code);
      el.style.width = `${block.frames * PX_PER_FRAME}px`;
      el.style.background = codeColor(block.code, level);
      el.title = `${level} ${block.index}: code ${block.code}`;
      el.textContent = String(block.code);
      if (
        state.selected &&
        state.selected.level === level &&
        state.selected.index === block.index
      ) {
        el.classList.add("selected");
      }
      wireBlock(el, level, block.index, model, state, handlers);
      track.appendChild(el);
    }
    container.appendChild(track);
  }
}

function wireBlock(
  el: HTMLElement,
  level: CodeLevel,
  index: number,
  model: TimelineModel,
  state: TimelineState,
  handlers: TimelineHandlers,
): void {
  el.addEventListener("click", () => {
    if (state.tool === "delete") {
      const unit = level === "top" ? index : Math.floor(index / 2);
      handlers.onEdit([deleteUnits(unit, unit + 1)]);
    } else {
      state.selected = { level, index };
      handlers.onSelect?.(level, index);
    }
  });
  if (level === "top") {
    el.draggable = true;
    el.addEventListener("dragstart", () => {
      state.dragFrom = index;
    });
    el.addEventListener("dragover", (ev) => ev.preventDefault());
    el.addEventListener("drop", () => {
      if (state.dragFrom !== null && state.dragFrom !== index) {
        handlers.onEdit([moveUnit(state.dragFrom, index)]);
      }
      state.dragFrom = null;
    });
  }
}

/** Palette click: replace the selected block's code. Returns the ops it
 * emitted (empty when nothing is selected, so no-op submits are impossible). */
export function paletteReplace(
  state: TimelineState,
  code: number,
  handlers: TimelineHandlers,
): EditOp[] {
  if (!state.selected) return [];
  const ops = [replaceBlock(state.selected.level, state.selected.index, code)];
  handlers.onEdit(ops);
  return ops;
}
