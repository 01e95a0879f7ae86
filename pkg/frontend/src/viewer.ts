/** Orthographic stick-figure rendering of world joint positions. */

export interface Projected {
  x: number;
  y: number;
  depth: number;
}

/** Orthographic camera looking along -y: screen x = world x, screen y = world z. */
export function projectJoint(
  joint: number[],
  width: number,
  height: number,
  scale: number,
  centerX: number,
): Projected {
  return {
    x: width / 2 + (joint[0] - centerX) * scale,
    y: height * 0.92 - joint[2] * scale,
    depth: joint[1],
  };
}

export interface ViewerOptions {
  scale: number;
  trail: number;        // ghosted past frames
  beatFlashFrames: number;
}

const DEFAULTS: ViewerOptions = { scale: 140, trail: 3, beatFlashFrames: 4 };

export class StickFigureViewer {
  private opts: ViewerOptions;

  constructor(
    private canvas: HTMLCanvasElement,
    private parents: number[],
    opts: Partial<ViewerOptions> = {},
  ) {
    this.opts = { ...DEFAULTS, ...opts };
  }

  /** Draw one frame (plus trail ghosts) with optional beat flash. */
  draw(joints: number[][][], frame: number, beatFrames: Set<number>): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.clearRect(0, 0, width, height);

    const centerX = joints[frame][0][0];
    // ground line
    ctx.strokeStyle = "#ccc";
    ctx.beginPath();
    ctx.moveTo(0, height * 0.92);
    ctx.lineTo(width, height * 0.92);
    ctx.stroke();

    for (let back = this.opts.trail; back >= 0; back--) {
      const f = frame - back * 4;
      if (f < 0) continue;
      const alpha = back === 0 ? 1.0 : 0.15 / back;
      this.drawSkeleton(ctx, joints[f], width, height, centerX, alpha);
    }
    if (beatFrames.has(frame)) {
      ctx.fillStyle = "rgba(255, 120, 0, 0.6)";
      ctx.beginPath();
      ctx.arc(width - 18, 18, 8, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  private drawSkeleton(
    ctx: CanvasRenderingContext2D,
    frameJoints: number[][],
    width: number,
    height: number,
    centerX: number,
    alpha: number,
  ): void {
    ctx.strokeStyle = `rgba(30, 30, 40, ${alpha})`;
    ctx.lineWidth = 2;
    for (let j = 0; j < frameJoints.length; j++) {
      const p = this.parents[j];
      if (p < 0) continue;
      const a = projectJoint(frameJoints[j], width, height, this.opts.scale, centerX);
      const b = projectJoint(frameJoints[p], width, height, this.opts.scale, centerX);
      ctx.beginPath();
      ctx.moveTo(a.x, a.y);
      ctx.lineTo(b.x, b.y);
      ctx.stroke();
    }
    ctx.fillStyle = `rgba(200, 60, 60, ${alpha})`;
    for (const joint of frameJoints) {
      const q = projectJoint(joint, width, height, this.opts.scale, centerX);
      ctx.beginPath();
      ctx.arc(q.x, q.y, 2.5, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

/** Frames on which a beat marker should flash, from beat times in seconds. */
export function beatFrameSet(beats: number[], fps: number, totalFrames: number): Set<number> {
  const frames = new Set<number>();
  for (const t of beats) {
    const f = Math.round(t * fps);
    if (f >= 0 && f < totalFrames) frames.add(f);
  }
  return frames;
}
