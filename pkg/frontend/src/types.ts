/** Wire types shared with the generation service. */

export type CodeLevel = "top" | "bottom";

export interface SessionCodes {
  version: number;
  top: number[];
  bottom: number[];
  fps: number;
  window: number;
}

/** Session payload returned by /api/generate, /api/session/:id and edits. */
export interface SessionRecord {
  v: number;
  id: string;
  parent_id: string | null;
  music_id: string;
  created_at: string;
  codes: SessionCodes;
  beats: number[];
  frames: number;
  fps: number;
  /** World joint positions per frame, [frames][joints][xyz]. */
  joints: number[][][];
  /** Parent index per joint, -1 for the root. */
  parents: number[];
}

export type EditKind =
  | "insert"
  | "delete"
  | "replace"
  | "reorder"
  | "swap_top"
  | "swap_bottom";

/** One edit step; target.range is half-open [start, stop). */
export interface EditOp {
  kind: EditKind;
  target: { level: CodeLevel | null; range: [number, number] };
  payload?: number[] | { top: number[]; bottom: number[] } | null;
}

export interface CodebookInfo {
  size: number;
  used: number;
  usage: Record<string, number>;
}

export interface HealthInfo {
  v: number;
  status: string;
  models_loaded: boolean;
  model_versions: Record<string, number | null>;
}
