/** Joint-angle trace overlay: bounded history and pure rendering. */

import { describe, expect, it } from "vitest";

import { LIMB_COLORS, TraceOverlay, TRACE_WINDOW_S } from "../src/trace.js";
import { FakeCtx } from "./helpers.js";

describe("TraceOverlay history", () => {
  it("keeps only the most recent window of samples", () => {
    const trace = new TraceOverlay();
    for (let t = 0; t <= 15000; t += 500) trace.push("left", t, t / 1000);
    const points = trace.points("left");
    const windowMs = TRACE_WINDOW_S * 1000;
    expect(points[0]!.tMs).toBeGreaterThanOrEqual(15000 - windowMs);
    expect(points[points.length - 1]!.tMs).toBe(15000);
  });

  it("drops stale and duplicate timestamps", () => {
    const trace = new TraceOverlay();
    trace.push("left", 1000, 10);
    trace.push("left", 1000, 20); // duplicate timestamp
    trace.push("left", 500, 30); // out of order
    trace.push("left", 1500, 40);
    expect(trace.points("left").map((p) => p.thetaDeg)).toEqual([10, 40]);
  });

  it("caps the per-limb buffer even within the window", () => {
    const trace = new TraceOverlay(3600); // very long window
    for (let i = 0; i < 5000; i++) trace.push("right", i, 0);
    expect(trace.points("right").length).toBeLessThanOrEqual(1024);
  });

  it("tracks limbs independently and clears completely", () => {
    const trace = new TraceOverlay();
    trace.push("left", 1, 5);
    trace.push("right", 2, 6);
    expect(trace.limbs()).toEqual(["left", "right"]);
    trace.clear();
    expect(trace.limbs()).toEqual([]);
    expect(trace.points("left")).toEqual([]);
  });
});

describe("TraceOverlay rendering", () => {
  function filled(): TraceOverlay {
    const trace = new TraceOverlay();
    for (let t = 0; t <= 4000; t += 1000) {
      trace.push("left", t, 10 + t / 100);
      trace.push("right", t, 5 + t / 200);
    }
    return trace;
  }

  it("is pure: identical state renders identical commands", () => {
    const trace = filled();
    const a = new FakeCtx();
    const b = new FakeCtx();
    trace.render(a, 0, 0, 320, 160, 4000);
    trace.render(b, 0, 0, 320, 160, 4000);
    expect(a.commands).toEqual(b.commands);
  });

  it("draws one polyline per limb in its configured color", () => {
    const trace = filled();
    const ctx = new FakeCtx();
    trace.render(ctx, 0, 0, 320, 160, 4000);
    const strokes = ctx.commands.filter((c) => c.startsWith("stroke"));
    // Three grid lines plus one polyline per limb.
    expect(strokes.length).toBe(3 + 2);
    expect(strokes.some((c) => c.includes(LIMB_COLORS["left"]!))).toBe(true);
    expect(strokes.some((c) => c.includes(LIMB_COLORS["right"]!))).toBe(true);
    // Each polyline visits all five samples.
    const lineTos = ctx.commands.filter((c) => c.startsWith("lineTo"));
    expect(lineTos.length).toBe(3 + 2 * 4); // 3 grid lines + 2 limbs x 4 segments
  });

  it("omits samples that have scrolled out of the window", () => {
    const trace = new TraceOverlay();
    trace.push("left", 0, 10);
    trace.push("left", 100, 20);
    trace.push("left", 20000, 30);
    trace.push("left", 20050, 40);
    const ctx = new FakeCtx();
    trace.render(ctx, 0, 0, 320, 160, 20050);
    // Only the two in-window samples survive; one two-point polyline.
    const lineTos = ctx.commands.filter((c) => c.startsWith("lineTo"));
    expect(lineTos.length).toBe(3 + 1); // 3 grid lines + a single segment
  });
});
