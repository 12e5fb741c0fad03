/** Wire protocol: binary skeleton frame packets and JSON control messages.
 *
 * One WebSocket connection carries both kinds of message.  Binary messages
 * are fixed-size skeleton frame packets (338 bytes, little-endian).  Text
 * messages are JSON objects discriminated by a `"type"` field.
 *
 * Frame packet layout (338 bytes, little-endian):
 *
 *     offset  size  field
 *     0       1     tag, always 0x01
 *     1       8     timestamp_ms, uint64
 *     9       4     user_id, uint32
 *     13      13*25 joints, each: x, y, z float32 followed by confidence uint8
 */

import { Confidence, JOINT_COUNT, Joint, SkeletonFrame } from "./skeleton.js";

export const FRAME_TAG = 0x01;
export const FRAME_PACKET_SIZE = 1 + 8 + 4 + 13 * JOINT_COUNT; // 338

export const MAX_TEXT_MESSAGE_BYTES = 4096;
export const MAX_FEEDBACK_CHARS = 512;

export type Role = "patient" | "therapist" | "observer";
export const ROLES: readonly Role[] = ["patient", "therapist", "observer"];

/** Every malformed wire input raises this; nothing else escapes decoding. */
export class ProtocolError extends Error {}

// ---------------------------------------------------------------------------
// binary frame packets
// ---------------------------------------------------------------------------

function asView(packet: ArrayBuffer | Uint8Array): DataView {
  if (packet instanceof Uint8Array) {
    return new DataView(packet.buffer, packet.byteOffset, packet.byteLength);
  }
  return new DataView(packet);
}

/** Parse a 338-byte wire packet back into a skeleton frame.
 *
 * Exact inverse of {@link encodeFrame} for frames whose coordinates are
 * float32-representable.  Every malformed input throws {@link ProtocolError}
 * with a distinct message.
 */
export function decodeFrame(packet: ArrayBuffer | Uint8Array): SkeletonFrame {
  const view = asView(packet);
  if (view.byteLength !== FRAME_PACKET_SIZE) {
    throw new ProtocolError(
      `bad packet length: expected ${FRAME_PACKET_SIZE}, got ${view.byteLength}`,
    );
  }
  const tag = view.getUint8(0);
  if (tag !== FRAME_TAG) {
    throw new ProtocolError(`unexpected tag: 0x${tag.toString(16).padStart(2, "0")}`);
  }
  const stamp = view.getBigUint64(1, true);
  if (stamp > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new ProtocolError(`timestamp beyond safe integer range: ${stamp}`);
  }
  const timestampMs = Number(stamp);
  const userId = view.getUint32(9, true);
  const joints: Joint[] = [];
  for (let i = 0; i < JOINT_COUNT; i++) {
    const base = 13 + 13 * i;
    const x = view.getFloat32(base, true);
    const y = view.getFloat32(base + 4, true);
    const z = view.getFloat32(base + 8, true);
    if (!(Number.isFinite(x) && Number.isFinite(y) && Number.isFinite(z))) {
      throw new ProtocolError(`non-finite position at joint ${i}`);
    }
    const conf = view.getUint8(base + 12);
    if (conf !== 0 && conf !== 1 && conf !== 2) {
      throw new ProtocolError(`invalid confidence ${conf} at joint ${i}`);
    }
    joints.push({ position: [x, y, z], confidence: conf as Confidence });
  }
  return { userId, timestampMs, joints };
}

/** Serialize one skeleton frame to its 338-byte wire packet.
 *
 * The live client is receive-only and never calls this; it exists for the
 * replay/test harness side of the protocol and mirrors the decoder exactly.
 */
export function encodeFrame(frame: SkeletonFrame): Uint8Array {
  if (frame.joints.length !== JOINT_COUNT) {
    throw new ProtocolError(`expected ${JOINT_COUNT} joints, got ${frame.joints.length}`);
  }
  if (!Number.isInteger(frame.userId) || frame.userId < 0 || frame.userId > 0xffffffff) {
    throw new ProtocolError(`user_id out of range: ${frame.userId}`);
  }
  if (!Number.isInteger(frame.timestampMs) || frame.timestampMs < 0) {
    throw new ProtocolError(`timestamp out of range: ${frame.timestampMs}`);
  }
  const out = new Uint8Array(FRAME_PACKET_SIZE);
  const view = new DataView(out.buffer);
  view.setUint8(0, FRAME_TAG);
  view.setBigUint64(1, BigInt(frame.timestampMs), true);
  view.setUint32(9, frame.userId, true);
  for (let i = 0; i < JOINT_COUNT; i++) {
    const joint = frame.joints[i]!;
    const [x, y, z] = joint.position;
    if (!(Number.isFinite(x) && Number.isFinite(y) && Number.isFinite(z))) {
      throw new ProtocolError(`non-finite position at joint ${i}`);
    }
    const conf = joint.confidence;
    if (conf !== 0 && conf !== 1 && conf !== 2) {
      throw new ProtocolError(`invalid confidence at joint ${i}`);
    }
    const base = 13 + 13 * i;
    view.setFloat32(base, x, true);
    view.setFloat32(base + 4, y, true);
    view.setFloat32(base + 8, z, true);
    view.setUint8(base + 12, conf);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON control messages
// ---------------------------------------------------------------------------

export interface PeerInfo {
  readonly user_id: number;
  readonly role: Role;
  readonly display_name: string;
}

/** Client -> server: request to enter a room under a role. */
export interface Join {
  readonly type: "join";
  readonly room_id: string;
  readonly role: Role;
  readonly display_name: string;
}

/** Server -> client: join accepted.  Also re-sent to every member as the
 * roster update whenever the peer list changes. */
export interface JoinAck {
  readonly type: "join_ack";
  readonly user_id: number;
  readonly peers: readonly PeerInfo[];
}

/** Free-text coaching cue, relayed to the whole room.  The hub stamps
 * `from_user_id` with the sending connection's real id. */
export interface Feedback {
  readonly type: "feedback";
  readonly from_user_id: number;
  readonly text: string;
}

/** Per-repetition metric broadcast, relayed verbatim to all peers. */
export interface MetricUpdate {
  readonly type: "metric_update";
  readonly exercise: string;
  readonly side: string;
  readonly rep_count: number;
  readonly last_peak_deg: number;
  readonly last_velocity_dps: number;
}

/** Orderly exit, broadcast with the departed participant's id. */
export interface Leave {
  readonly type: "leave";
  readonly user_id: number;
}

/** Server -> client: request rejected; `code` is machine-readable. */
export interface ErrorMsg {
  readonly type: "error";
  readonly code: string;
  readonly detail: string;
}

export type ControlMessage = Join | JoinAck | Feedback | MetricUpdate | Leave | ErrorMsg;

/** Serialize a control message to its JSON text form. */
export function encodeControl(msg: ControlMessage): string {
  if (msg.type === "feedback" && msg.text.length > MAX_FEEDBACK_CHARS) {
    throw new ProtocolError(`feedback text over ${MAX_FEEDBACK_CHARS} characters`);
  }
  return JSON.stringify(msg);
}

function isObject(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function requireString(obj: Record<string, unknown>, key: string): string {
  const value = obj[key];
  if (value === undefined) throw new ProtocolError(`missing field: ${key}`);
  if (typeof value !== "string") throw new ProtocolError(`wrong type for field ${key}`);
  return value;
}

function requireInt(obj: Record<string, unknown>, key: string): number {
  const value = obj[key];
  if (value === undefined) throw new ProtocolError(`missing field: ${key}`);
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new ProtocolError(`wrong type for field ${key}`);
  }
  return value;
}

function requireNumber(obj: Record<string, unknown>, key: string): number {
  const value = obj[key];
  if (value === undefined) throw new ProtocolError(`missing field: ${key}`);
  if (typeof value !== "number") throw new ProtocolError(`wrong type for field ${key}`);
  return value;
}

function requireRole(raw: string): Role {
  if (raw === "patient" || raw === "therapist" || raw === "observer") return raw;
  throw new ProtocolError(`unknown role: ${raw}`);
}

/** Parse a JSON control message.
 *
 * Every malformed input — bad JSON, unknown type, missing or mistyped
 * fields, oversized text — throws {@link ProtocolError}.
 */
export function decodeControl(text: string): ControlMessage {
  if (new TextEncoder().encode(text).length > MAX_TEXT_MESSAGE_BYTES) {
    throw new ProtocolError("control message too large");
  }
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (exc) {
    throw new ProtocolError(`invalid JSON: ${(exc as Error).message}`);
  }
  if (!isObject(obj)) throw new ProtocolError("control message must be a JSON object");
  const kind = requireString(obj, "type");

  if (kind === "join") {
    const role = requireRole(requireString(obj, "role"));
    const name = requireString(obj, "display_name");
    const roomId = requireString(obj, "room_id");
    if (roomId.length < 1 || roomId.length > 64) {
      throw new ProtocolError("room_id must be 1-64 characters");
    }
    if (name.length > 64) throw new ProtocolError("display_name too long");
    return { type: "join", room_id: roomId, role, display_name: name };
  }

  if (kind === "join_ack") {
    const rawPeers = obj["peers"];
    if (!Array.isArray(rawPeers)) throw new ProtocolError("wrong type for field peers");
    const peers: PeerInfo[] = rawPeers.map((entry) => {
      if (!isObject(entry)) throw new ProtocolError("peer entry must be an object");
      return {
        user_id: requireInt(entry, "user_id"),
        role: requireRole(requireString(entry, "role")),
        display_name: requireString(entry, "display_name"),
      };
    });
    return { type: "join_ack", user_id: requireInt(obj, "user_id"), peers };
  }

  if (kind === "feedback") {
    const body = requireString(obj, "text");
    if (body.length > MAX_FEEDBACK_CHARS) {
      throw new ProtocolError(`feedback text over ${MAX_FEEDBACK_CHARS} characters`);
    }
    return { type: "feedback", from_user_id: requireInt(obj, "from_user_id"), text: body };
  }

  if (kind === "metric_update") {
    const peak = requireNumber(obj, "last_peak_deg");
    const velocity = requireNumber(obj, "last_velocity_dps");
    if (!(Number.isFinite(peak) && Number.isFinite(velocity))) {
      throw new ProtocolError("non-finite metric value");
    }
    return {
      type: "metric_update",
      exercise: requireString(obj, "exercise"),
      side: requireString(obj, "side"),
      rep_count: requireInt(obj, "rep_count"),
      last_peak_deg: peak,
      last_velocity_dps: velocity,
    };
  }

  if (kind === "leave") {
    return { type: "leave", user_id: requireInt(obj, "user_id") };
  }

  if (kind === "error") {
    const detail = obj["detail"];
    return {
      type: "error",
      code: requireString(obj, "code"),
      detail: typeof detail === "string" ? detail : String(detail ?? ""),
    };
  }

  throw new ProtocolError(`unknown message type: ${kind}`);
}
