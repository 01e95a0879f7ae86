/** Editor shell: generate, inspect, edit, and compare dance sessions.
 *
 * The page is stateless with respect to model data: everything shown is
 * refetchable by session id, and edits never mutate an existing session,
 * so "undo" is just navigating to the parent.
 */

import { editSession, generateSession, getCodebooks, getSession } from "./api.js";
import { swapLevelFromDonor } from "./gestures.js";
import { PlaybackClock, SyncController } from "./playback.js";
import { buildTimeline } from "./timeline.js";
import { initialState, paletteReplace, renderTimeline, TimelineState, Tool } from "./timeline_dom.js";
import type { CodeLevel, EditOp, SessionRecord } from "./types.js";
import { beatFrameSet, StickFigureViewer } from "./viewer.js";

interface View {
  session: SessionRecord;
  clock: PlaybackClock;
  viewer: StickFigureViewer;
  canvas: HTMLCanvasElement;
}

const state: {
  current: View | null;
  compare: View | null;
  timeline: TimelineState;
  sync: SyncController;
  raf: number;
} = {
  current: null,
  compare: null,
  timeline: initialState(),
  sync: new SyncController(),
  raf: 0,
};

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 4000);
}

function makeView(session: SessionRecord, canvas: HTMLCanvasElement): View {
  const clock = new PlaybackClock(session.frames, session.fps);
  const viewer = new StickFigureViewer(canvas, session.parents);
  return { session, clock, viewer, canvas };
}

function showSession(session: SessionRecord): void {
  state.current = makeView(session, el<HTMLCanvasElement>("viewport"));
  state.sync = new SyncController();
  state.sync.attach(state.current.clock);
  if (state.compare) state.sync.attach(state.compare.clock);
  state.timeline = { ...initialState(), tool: currentTool() };
  redrawTimeline();
  el<HTMLSpanElement>("session-id").textContent = session.id;
  const parentBtn = el<HTMLButtonElement>("parent-btn");
  parentBtn.disabled = session.parent_id === null;
  parentBtn.dataset.parent = session.parent_id ?? "";
  const scrub = el<HTMLInputElement>("scrub");
  scrub.max = String(Math.max(session.frames - 1, 0));
  scrub.value = "0";
  state.current.clock.scrubTo(0, performance.now());
}

function currentTool(): Tool {
  return (el<HTMLSelectElement>("tool").value as Tool) ?? "select";
}

function redrawTimeline(): void {
  if (!state.current) return;
  const model = buildTimeline(state.current.session.codes);
  renderTimeline(el<HTMLDivElement>("timeline"), model, state.timeline, {
    onEdit: submitEdits,
    onSelect: (level, index) => {
      el<HTMLSpanElement>("selection").textContent = `${level} #${index}`;
      redrawTimeline();
    },
  });
}

async function submitEdits(ops: EditOp[]): Promise<void> {
  if (!state.current || ops.length === 0) return;
  try {
    const child = await editSession(state.current.session.id, ops);
    showSession(child);
  } catch (err) {
    toast(String(err));
  }
}

function tick(now: number): void {
  const views = [state.current, state.compare].filter((v): v is View => v !== null);
  for (const view of views) {
    const frame = view.clock.frameAt(now);
    view.viewer.draw(
      view.session.joints,
      frame,
      beatFrameSet(view.session.beats, view.session.fps, view.session.frames),
    );
  }
  if (state.current && state.current.clock.isPlaying) {
    el<HTMLInputElement>("scrub").value = String(state.current.clock.frameAt(now));
  }
  state.raf = requestAnimationFrame(tick);
}

function wireControls(): void {
  el<HTMLButtonElement>("generate-btn").addEventListener("click", async () => {
    try {
      const music = el<HTMLInputElement>("music").value || "click:120";
      const steps = Number(el<HTMLInputElement>("steps").value) || 50;
      const seed = Number(el<HTMLInputElement>("seed").value) || 0;
      showSession(await generateSession(music, steps, seed));
    } catch (err) {
      toast(String(err));
    }
  });

  el<HTMLButtonElement>("load-btn").addEventListener("click", async () => {
    try {
      showSession(await getSession(el<HTMLInputElement>("session-input").value.trim()));
    } catch (err) {
      toast(String(err));
    }
  });

  el<HTMLButtonElement>("parent-btn").addEventListener("click", async () => {
    const parent = el<HTMLButtonElement>("parent-btn").dataset.parent;
    if (parent) showSession(await getSession(parent));
  });

  el<HTMLSelectElement>("tool").addEventListener("change", () => {
    state.timeline.tool = currentTool();
  });

  el<HTMLButtonElement>("play-btn").addEventListener("click", () => {
    const now = performance.now();
    if (state.current?.clock.isPlaying) state.sync.pause(now);
    else state.sync.play(now);
  });

  el<HTMLInputElement>("scrub").addEventListener("input", (ev) => {
    const frame = Number((ev.target as HTMLInputElement).value);
    state.sync.scrubTo(frame, performance.now());
  });

  el<HTMLButtonElement>("swap-btn").addEventListener("click", async () => {
    try {
      const donorId = el<HTMLInputElement>("donor-input").value.trim();
      const level = el<HTMLSelectElement>("swap-level").value as CodeLevel;
      if (!donorId || !state.current) return;
      const donor = await getSession(donorId);
      await submitEdits([swapLevelFromDonor(level, donor.codes)]);
    } catch (err) {
      toast(String(err));
    }
  });

  el<HTMLButtonElement>("compare-btn").addEventListener("click", async () => {
    try {
      const donorId = el<HTMLInputElement>("donor-input").value.trim();
      if (!donorId) return;
      const donor = await getSession(donorId);
      const canvas = el<HTMLCanvasElement>("compare-viewport");
      canvas.parentElement?.classList.remove("hidden");
      state.compare = makeView(donor, canvas);
      state.sync = new SyncController();
      if (state.current) state.sync.attach(state.current.clock);
      state.sync.attach(state.compare.clock);
      state.sync.scrubTo(0, performance.now());
    } catch (err) {
      toast(String(err));
    }
  });
}

async function buildPalette(): Promise<void> {
  try {
    const books = await getCodebooks();
    const palette = el<HTMLDivElement>("palette");
    palette.textContent = "";
    const addSwatch = (level: CodeLevel, size: number) => {
      for (let code = 0; code < size; code++) {
        const sw = document.createElement("button");
        sw.className = `swatch swatch-${level}`;
        sw.dataset.level = level;
        sw.dataset.code = String(code);
        sw.textContent = String(code);
        sw.addEventListener("click", () => {
          if (state.timeline.selected?.level === level) {
            paletteReplace(state.timeline, code, { onEdit: submitEdits });
          }
        });
        palette.appendChild(sw);
      }
    };
    addSwatch("top", books.top.size);
    addSwatch("bottom", books.bottom.size);
  } catch {
    // palette is cosmetic until models are loaded
  }
}

export function boot(): void {
  wireControls();
  void buildPalette();
  state.raf = requestAnimationFrame(tick);
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
