/** Shared test utilities: vector-file loading, frame builders, a drawing
 * context that records its command stream, and a scriptable fake socket. */

import { readFileSync } from "node:fs";

import { Ctx2D } from "../src/scene.js";
import { WebSocketLike } from "../src/session.js";
import { Confidence, Joint, JOINT_COUNT, SkeletonFrame } from "../src/skeleton.js";

// --- parity-vector files -------------------------------------------------

/** One joint as stored in the vector files: [x, y, z, confidence]. */
export type JointTuple = readonly [number, number, number, number];

export interface AngleCase {
  readonly name: string;
  readonly joints: readonly JointTuple[];
  readonly results: Readonly<Record<string, { value?: number; error?: string }>>;
}

export interface FrameVector {
  readonly name: string;
  readonly packet_hex: string;
  readonly user_id: number;
  readonly timestamp_ms: number;
  readonly joints: readonly JointTuple[];
}

export interface InvalidVector {
  readonly name: string;
  readonly packet_hex: string;
}

export function loadVectors<T>(basename: string): T {
  const url = new URL(`../vectors/${basename}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf8")) as T;
}

export function hexToBytes(hex: string): Uint8Array {
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export function bytesToHex(bytes: Uint8Array): string {
  return [...bytes].map((b) => b.toString(16).padStart(2, "0")).join("");
}

export function frameFromTuples(
  userId: number,
  timestampMs: number,
  joints: readonly JointTuple[],
): SkeletonFrame {
  if (joints.length !== JOINT_COUNT) throw new Error(`expected ${JOINT_COUNT} joints`);
  return {
    userId,
    timestampMs,
    joints: joints.map(
      ([x, y, z, c]): Joint => ({ position: [x, y, z], confidence: c as Confidence }),
    ),
  };
}

/** A known-good standing pose taken from the committed frame vectors. */
export function standingFrame(userId = 1, timestampMs = 0): SkeletonFrame {
  const vectors = loadVectors<{ valid: FrameVector[] }>("frame-vectors.json");
  const base = vectors.valid[0]!;
  return frameFromTuples(userId, timestampMs, base.joints);
}

/** The same pose mirrored left-right about the x = 0 plane. */
export function mirroredX(frame: SkeletonFrame): SkeletonFrame {
  return {
    userId: frame.userId,
    timestampMs: frame.timestampMs,
    joints: frame.joints.map((j) => ({
      position: [-j.position[0], j.position[1], j.position[2]],
      confidence: j.confidence,
    })),
  };
}

// --- recording drawing context -------------------------------------------

/** Records every draw call (with the style active at stroke/fill time) so
 * tests can compare or snapshot the exact command stream. */
export class FakeCtx implements Ctx2D {
  lineWidth = 1;
  strokeStyle: string | CanvasGradient | CanvasPattern = "#000";
  fillStyle: string | CanvasGradient | CanvasPattern = "#000";
  globalAlpha = 1;
  font = "";
  textAlign: CanvasTextAlign = "left";

  readonly commands: string[] = [];
  /** Raw unrounded moveTo/lineTo coordinates, for geometric assertions. */
  readonly segments: { from: [number, number]; to: [number, number] }[] = [];

  private cursor: [number, number] | null = null;

  private fmt(n: number): string {
    return Object.is(n, -0) ? "0" : String(Math.round(n * 100) / 100);
  }

  beginPath(): void {
    this.commands.push("beginPath");
    this.cursor = null;
  }

  moveTo(x: number, y: number): void {
    this.commands.push(`moveTo ${this.fmt(x)},${this.fmt(y)}`);
    this.cursor = [x, y];
  }

  lineTo(x: number, y: number): void {
    this.commands.push(`lineTo ${this.fmt(x)},${this.fmt(y)}`);
    if (this.cursor !== null) {
      this.segments.push({ from: this.cursor, to: [x, y] });
    }
    this.cursor = [x, y];
  }

  stroke(): void {
    this.commands.push(
      `stroke style=${String(this.strokeStyle)} w=${this.fmt(this.lineWidth)} a=${this.fmt(this.globalAlpha)}`,
    );
  }

  arc(x: number, y: number, r: number): void {
    this.commands.push(`arc ${this.fmt(x)},${this.fmt(y)} r=${this.fmt(r)}`);
  }

  fill(): void {
    this.commands.push(
      `fill style=${String(this.fillStyle)} a=${this.fmt(this.globalAlpha)}`,
    );
  }

  fillRect(x: number, y: number, w: number, h: number): void {
    this.commands.push(
      `fillRect ${this.fmt(x)},${this.fmt(y)} ${this.fmt(w)}x${this.fmt(h)} style=${String(this.fillStyle)}`,
    );
  }

  fillText(text: string, x: number, y: number): void {
    this.commands.push(`fillText "${text}" ${this.fmt(x)},${this.fmt(y)}`);
  }

  save(): void {
    this.commands.push("save");
  }

  restore(): void {
    this.commands.push("restore");
  }
}

// --- scriptable socket ----------------------------------------------------

/** A WebSocket stand-in the test drives by hand: `open()`, `message()`,
 * and `end()` fire the handlers the session installed. */
export class FakeSocket implements WebSocketLike {
  binaryType = "blob";
  readonly sent: unknown[] = [];
  closedWith: { code?: number; reason?: string } | null = null;

  onopen: (() => void) | null = null;
  onmessage: ((event: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  send(data: string): void {
    if (this.closedWith !== null) throw new Error("send on closed socket");
    this.sent.push(data);
  }

  close(code?: number, reason?: string): void {
    this.closedWith = { code, reason };
  }

  open(): void {
    this.onopen?.();
  }

  message(data: unknown): void {
    this.onmessage?.({ data });
  }

  end(): void {
    this.onclose?.();
  }
}
