/** Joint-angle trace overlay: a bounded per-limb history of recent
 * (t, θ) points, drawn as polylines so the magnitude of movement is
 * visible at a glance.  The default window covers about two repetitions
 * at a typical exercise cadence.
 */

import { Ctx2D } from "./scene.js";

export const TRACE_WINDOW_S = 10;

export interface TracePoint {
  readonly tMs: number;
  readonly thetaDeg: number;
}

export const LIMB_COLORS: Readonly<Record<string, string>> = {
  left: "#e4b32c",
  right: "#3fb6b2",
};

const FALLBACK_COLOR = "#999999";

/** Hard cap on stored points per limb, independent of clock sanity. */
const MAX_POINTS_PER_LIMB = 1024;

export class TraceOverlay {
  readonly windowMs: number;
  private readonly buffers = new Map<string, TracePoint[]>();

  constructor(windowS: number = TRACE_WINDOW_S) {
    this.windowMs = windowS * 1000;
  }

  /** Append one sample; evicts anything older than the window. */
  push(limb: string, tMs: number, thetaDeg: number): void {
    let buffer = this.buffers.get(limb);
    if (buffer === undefined) {
      buffer = [];
      this.buffers.set(limb, buffer);
    }
    const last = buffer[buffer.length - 1];
    if (last !== undefined && tMs <= last.tMs) return; // stale or duplicate sample
    buffer.push({ tMs, thetaDeg });
    this.evict(buffer, tMs);
  }

  private evict(buffer: TracePoint[], nowMs: number): void {
    const cutoff = nowMs - this.windowMs;
    let drop = 0;
    while (drop < buffer.length && buffer[drop]!.tMs < cutoff) drop++;
    if (buffer.length - drop > MAX_POINTS_PER_LIMB) {
      drop = buffer.length - MAX_POINTS_PER_LIMB;
    }
    if (drop > 0) buffer.splice(0, drop);
  }

  points(limb: string): readonly TracePoint[] {
    return this.buffers.get(limb) ?? [];
  }

  limbs(): readonly string[] {
    return [...this.buffers.keys()].sort();
  }

  clear(): void {
    this.buffers.clear();
  }

  /** Draw every limb's polyline into the given box.  Time maps left to
   * right ending at `nowMs`; the angle axis spans `[minDeg, maxDeg]`.
   * Pure: same state and arguments produce the same drawing commands. */
  render(
    ctx: Ctx2D,
    x: number,
    y: number,
    width: number,
    height: number,
    nowMs: number,
    minDeg = -10,
    maxDeg = 90,
  ): void {
    ctx.save();
    ctx.strokeStyle = "#3a3f4a";
    ctx.lineWidth = 1;
    for (const gridDeg of [0, 30, 60]) {
      const gy = y + height - ((gridDeg - minDeg) / (maxDeg - minDeg)) * height;
      ctx.beginPath();
      ctx.moveTo(x, gy);
      ctx.lineTo(x + width, gy);
      ctx.stroke();
    }
    const t0 = nowMs - this.windowMs;
    for (const limb of this.limbs()) {
      const pts = this.points(limb).filter((p) => p.tMs >= t0 && p.tMs <= nowMs);
      if (pts.length < 2) continue;
      ctx.strokeStyle = LIMB_COLORS[limb] ?? FALLBACK_COLOR;
      ctx.lineWidth = 2;
      ctx.beginPath();
      pts.forEach((p, i) => {
        const px = x + ((p.tMs - t0) / this.windowMs) * width;
        const clamped = Math.min(Math.max(p.thetaDeg, minDeg), maxDeg);
        const py = y + height - ((clamped - minDeg) / (maxDeg - minDeg)) * height;
        if (i === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.stroke();
    }
    ctx.restore();
  }
}
