/** Live session state: one WebSocket into a hub room, tracked peers with
 * their latest skeleton frames, the feedback log, and the metric panel.
 *
 * The handler is event-driven and never blocks: frames are latest-wins per
 * peer (the render loop reads whatever is newest), control messages are
 * applied in arrival order.  The client is receive-only for skeleton
 * data — no code path here ever sends a binary frame; outgoing traffic is
 * limited to join, feedback, and leave control messages.
 */

import {
  ControlMessage,
  decodeControl,
  decodeFrame,
  encodeControl,
  MetricUpdate,
  ProtocolError,
  Role,
} from "./protocol.js";
import { SkeletonFrame } from "./skeleton.js";

export type ConnectionState = "idle" | "connecting" | "joined" | "reconnecting" | "rejected" | "closed";

/** The browser-WebSocket surface the session drives; injectable in tests. */
export interface WebSocketLike {
  binaryType: string;
  send(data: string): void;
  close(code?: number, reason?: string): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export interface PeerState {
  readonly userId: number;
  role?: Role;
  name?: string;
  frame?: SkeletonFrame;
  lastUpdateMs?: number;
}

export interface FeedbackEntry {
  readonly fromUserId: number;
  readonly fromName: string;
  readonly text: string;
  readonly atMs: number;
}

export interface Toast {
  readonly text: string;
  readonly atMs: number;
}

export interface SessionConfig {
  url: string;
  room: string;
  role: Role;
  name: string;
  /** Creates the socket; defaults to the browser `WebSocket`. */
  socketFactory?: (url: string) => WebSocketLike;
  now?: () => number;
  warn?: (...args: unknown[]) => void;
  /** Called after every state change so the UI can refresh. */
  onChange?: () => void;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
}

export const TOAST_LIFETIME_MS = 4000;
/** Avatars not refreshed within this window are dropped from the scene. */
export const STALE_AVATAR_MS = 5000;

const RECONNECT_BASE_MS = 500;
const RECONNECT_MAX_MS = 8000;

export class ClientSession {
  readonly room: string;
  readonly role: Role;
  readonly name: string;

  state: ConnectionState = "idle";
  selfId: number | null = null;
  /** User-visible error banner, e.g. a rejected join. */
  banner: string | null = null;

  readonly peers = new Map<number, PeerState>();
  readonly feedbackLog: FeedbackEntry[] = [];
  readonly toasts: Toast[] = [];
  /** Latest metric update per side, verbatim as received. */
  readonly metrics = new Map<string, MetricUpdate>();

  framesReceived = 0;
  framesDropped = 0;

  private readonly url: string;
  private readonly socketFactory: (url: string) => WebSocketLike;
  private readonly now: () => number;
  private readonly warn: (...args: unknown[]) => void;
  private readonly onChange: () => void;
  private readonly reconnectBaseMs: number;
  private readonly reconnectMaxMs: number;

  private socket: WebSocketLike | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private reconnectAttempts = 0;
  private closing = false;
  private readonly pendingFeedback: string[] = [];

  constructor(config: SessionConfig) {
    this.url = config.url;
    this.room = config.room;
    this.role = config.role;
    this.name = config.name;
    this.socketFactory = config.socketFactory ?? ((url) => new WebSocket(url) as WebSocketLike);
    this.now = config.now ?? Date.now;
    this.warn = config.warn ?? console.warn.bind(console);
    this.onChange = config.onChange ?? (() => {});
    this.reconnectBaseMs = config.reconnectBaseMs ?? RECONNECT_BASE_MS;
    this.reconnectMaxMs = config.reconnectMaxMs ?? RECONNECT_MAX_MS;
  }

  /** Open the socket and join the room; reconnects with backoff on drop. */
  connect(): void {
    if (this.closing || this.state === "rejected") return;
    if (this.state !== "reconnecting") this.state = "connecting";
    let socket: WebSocketLike;
    try {
      socket = this.socketFactory(this.url);
    } catch (exc) {
      this.warn("connect failed:", exc);
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.binaryType = "arraybuffer";
    socket.onopen = () => {
      socket.send(
        encodeControl({
          type: "join",
          room_id: this.room,
          role: this.role,
          display_name: this.name,
        }),
      );
    };
    socket.onmessage = (event) => this.handleMessage(event.data);
    socket.onerror = () => {
      // The close handler owns reconnection.
    };
    socket.onclose = () => {
      if (this.socket !== socket) return; // superseded by a newer socket
      this.socket = null;
      if (this.closing) {
        this.state = "closed";
      } else if (this.state !== "rejected") {
        this.scheduleReconnect();
      }
      this.onChange();
    };
    this.onChange();
  }

  /** Leave the room and stop reconnecting. */
  close(): void {
    this.closing = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    const socket = this.socket;
    if (socket !== null) {
      if (this.state === "joined" && this.selfId !== null) {
        try {
          socket.send(encodeControl({ type: "leave", user_id: this.selfId }));
        } catch {
          // best effort; the close below is what matters
        }
      }
      socket.close(1000, "leaving");
    }
    this.state = "closed";
    this.onChange();
  }

  /** Send a coaching cue to the room.  Empty text is rejected here and
   * never reaches the wire; while disconnected the cue is queued with a
   * warning and flushed on the next successful join. */
  sendFeedback(text: string): boolean {
    const trimmed = text.trim();
    if (trimmed === "") {
      this.warn("ignoring empty feedback");
      return false;
    }
    if (this.state === "joined" && this.socket !== null && this.selfId !== null) {
      this.socket.send(
        encodeControl({ type: "feedback", from_user_id: this.selfId, text: trimmed }),
      );
    } else {
      this.warn("not connected; feedback queued");
      this.pendingFeedback.push(trimmed);
    }
    return true;
  }

  /** Peers that currently have a frame to draw, user-id order. */
  avatars(): { userId: number; frame: SkeletonFrame; role?: Role; name?: string }[] {
    const out = [];
    for (const peer of this.peers.values()) {
      if (peer.frame !== undefined) {
        out.push({ userId: peer.userId, frame: peer.frame, role: peer.role, name: peer.name });
      }
    }
    return out.sort((a, b) => a.userId - b.userId);
  }

  /** Drop stale avatars and expired toasts; call from the render loop. */
  prune(nowMs: number): void {
    let changed = false;
    for (const peer of this.peers.values()) {
      if (peer.frame !== undefined && (peer.lastUpdateMs ?? 0) < nowMs - STALE_AVATAR_MS) {
        delete peer.frame;
        changed = true;
      }
    }
    while (this.toasts.length > 0 && this.toasts[0]!.atMs < nowMs - TOAST_LIFETIME_MS) {
      this.toasts.shift();
      changed = true;
    }
    if (changed) this.onChange();
  }

  private scheduleReconnect(): void {
    if (this.closing || this.reconnectTimer !== null) return;
    this.state = "reconnecting";
    const delay = Math.min(
      this.reconnectBaseMs * 2 ** this.reconnectAttempts,
      this.reconnectMaxMs,
    );
    this.reconnectAttempts += 1;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay);
  }

  private handleMessage(data: unknown): void {
    if (typeof data === "string") {
      let msg: ControlMessage;
      try {
        msg = decodeControl(data);
      } catch (exc) {
        this.warn("dropping malformed control message:", (exc as Error).message);
        return;
      }
      this.handleControl(msg);
      return;
    }
    // Binary: a skeleton frame packet.
    if (this.state !== "joined") {
      this.framesDropped += 1;
      return; // render only frames from a room we have actually joined
    }
    let frame: SkeletonFrame;
    try {
      frame = decodeFrame(data as ArrayBuffer);
    } catch (exc) {
      if (exc instanceof ProtocolError) {
        this.warn("dropping malformed frame:", exc.message);
        this.framesDropped += 1;
        return;
      }
      throw exc;
    }
    const peer = this.ensurePeer(frame.userId);
    peer.frame = frame; // latest frame wins; intermediate frames are skipped
    peer.lastUpdateMs = this.now();
    this.framesReceived += 1;
    this.onChange();
  }

  private handleControl(msg: ControlMessage): void {
    switch (msg.type) {
      case "join_ack": {
        this.selfId = msg.user_id;
        this.state = "joined";
        this.banner = null;
        this.reconnectAttempts = 0;
        for (const info of msg.peers) {
          const peer = this.ensurePeer(info.user_id);
          peer.role = info.role;
          peer.name = info.display_name;
        }
        const pending = this.pendingFeedback.splice(0);
        for (const text of pending) this.sendFeedback(text);
        break;
      }
      case "feedback": {
        const fromName = this.peers.get(msg.from_user_id)?.name ?? `user ${msg.from_user_id}`;
        const entry: FeedbackEntry = {
          fromUserId: msg.from_user_id,
          fromName,
          text: msg.text,
          atMs: this.now(),
        };
        this.feedbackLog.push(entry);
        if (msg.from_user_id !== this.selfId) {
          this.toasts.push({ text: `${fromName}: ${msg.text}`, atMs: entry.atMs });
        }
        break;
      }
      case "metric_update": {
        this.metrics.set(msg.side, msg);
        break;
      }
      case "leave": {
        this.peers.delete(msg.user_id);
        break;
      }
      case "error": {
        this.banner = msg.detail !== "" ? `${msg.code}: ${msg.detail}` : msg.code;
        if (this.state !== "joined") {
          this.state = "rejected"; // e.g. role occupied: do not retry
          if (this.reconnectTimer !== null) {
            clearTimeout(this.reconnectTimer);
            this.reconnectTimer = null;
          }
        }
        break;
      }
      default: {
        this.warn("ignoring unexpected control message:", msg.type);
        return;
      }
    }
    this.onChange();
  }

  private ensurePeer(userId: number): PeerState {
    let peer = this.peers.get(userId);
    if (peer === undefined) {
      peer = { userId };
      this.peers.set(userId, peer);
    }
    return peer;
  }
}
