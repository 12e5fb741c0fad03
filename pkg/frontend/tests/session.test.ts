/** Session state machine: join handshake, reconnection, frame intake,
 * feedback, and the receive-only guarantee. */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { encodeControl, encodeFrame } from "../src/protocol.js";
import { ClientSession, SessionConfig, STALE_AVATAR_MS, TOAST_LIFETIME_MS } from "../src/session.js";
import { FakeSocket, standingFrame } from "./helpers.js";

interface Rig {
  session: ClientSession;
  sockets: FakeSocket[];
  warnings: string[];
  clock: { nowMs: number };
}

function rig(overrides: Partial<SessionConfig> = {}): Rig {
  const sockets: FakeSocket[] = [];
  const warnings: string[] = [];
  const clock = { nowMs: 100_000 };
  const session = new ClientSession({
    url: "ws://hub.test/ws",
    room: "clinic",
    role: "therapist",
    name: "doc",
    socketFactory: () => {
      const socket = new FakeSocket();
      sockets.push(socket);
      return socket;
    },
    now: () => clock.nowMs,
    warn: (...args) => warnings.push(args.map(String).join(" ")),
    ...overrides,
  });
  return { session, sockets, warnings, clock };
}

function ack(socket: FakeSocket, userId: number, peers: object[] = []): void {
  socket.message(JSON.stringify({ type: "join_ack", user_id: userId, peers }));
}

function joined(overrides: Partial<SessionConfig> = {}): Rig {
  const r = rig(overrides);
  r.session.connect();
  r.sockets[0]!.open();
  ack(r.sockets[0]!, 42, [{ user_id: 7, role: "patient", display_name: "pat" }]);
  return r;
}

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("joining", () => {
  it("sends a join on open and applies the ack", () => {
    const { session, sockets } = rig();
    session.connect();
    expect(session.state).toBe("connecting");
    const socket = sockets[0]!;
    expect(socket.binaryType).toBe("arraybuffer");
    socket.open();
    expect(socket.sent).toEqual([
      JSON.stringify({ type: "join", room_id: "clinic", role: "therapist", display_name: "doc" }),
    ]);
    ack(socket, 42, [{ user_id: 7, role: "patient", display_name: "pat" }]);
    expect(session.state).toBe("joined");
    expect(session.selfId).toBe(42);
    expect(session.peers.get(7)).toMatchObject({ role: "patient", name: "pat" });
  });

  it("treats a rejected join as final: banner, no reconnect", () => {
    const { session, sockets } = rig();
    session.connect();
    sockets[0]!.open();
    sockets[0]!.message(
      JSON.stringify({ type: "error", code: "role occupied", detail: "room already has a therapist" }),
    );
    expect(session.state).toBe("rejected");
    expect(session.banner).toBe("role occupied: room already has a therapist");
    sockets[0]!.end(); // hub closes the connection after rejecting
    vi.advanceTimersByTime(60_000);
    expect(sockets.length).toBe(1);
    expect(session.state).toBe("rejected");
  });

  it("refreshes the roster from join_ack re-sends", () => {
    const { session, sockets } = joined();
    ack(sockets[0]!, 42, [
      { user_id: 7, role: "patient", display_name: "pat" },
      { user_id: 9, role: "observer", display_name: "student" },
    ]);
    expect([...session.peers.keys()].sort()).toEqual([7, 9]);
  });
});

describe("reconnection", () => {
  it("backs off exponentially up to the cap", () => {
    const { session, sockets } = joined({ reconnectBaseMs: 500, reconnectMaxMs: 2000 });
    sockets[0]!.end();
    expect(session.state).toBe("reconnecting");

    vi.advanceTimersByTime(499);
    expect(sockets.length).toBe(1);
    vi.advanceTimersByTime(1);
    expect(sockets.length).toBe(2); // first retry after 500 ms

    sockets[1]!.end();
    vi.advanceTimersByTime(999);
    expect(sockets.length).toBe(2);
    vi.advanceTimersByTime(1);
    expect(sockets.length).toBe(3); // second retry after 1000 ms

    sockets[2]!.end();
    vi.advanceTimersByTime(2000);
    expect(sockets.length).toBe(4); // third retry hits the 2000 ms cap

    sockets[3]!.end();
    vi.advanceTimersByTime(2000);
    expect(sockets.length).toBe(5); // stays at the cap
  });

  it("resets the backoff after a successful rejoin", () => {
    const { session, sockets } = joined({ reconnectBaseMs: 500, reconnectMaxMs: 8000 });
    sockets[0]!.end();
    vi.advanceTimersByTime(500);
    sockets[1]!.end();
    vi.advanceTimersByTime(1000);
    sockets[2]!.open();
    ack(sockets[2]!, 42);
    expect(session.state).toBe("joined");

    sockets[2]!.end(); // next drop starts from the base delay again
    vi.advanceTimersByTime(500);
    expect(sockets.length).toBe(4);
  });

  it("does not reconnect after an explicit close", () => {
    const { session, sockets } = joined();
    session.close();
    expect(session.state).toBe("closed");
    const socket = sockets[0]!;
    expect(socket.closedWith).toEqual({ code: 1000, reason: "leaving" });
    const lastSent = JSON.parse(socket.sent[socket.sent.length - 1] as string);
    expect(lastSent).toEqual({ type: "leave", user_id: 42 });
    socket.end();
    vi.advanceTimersByTime(60_000);
    expect(sockets.length).toBe(1);
    expect(session.state).toBe("closed");
  });
});

describe("frame intake", () => {
  it("keeps only the latest frame per peer", () => {
    const { session, sockets } = joined();
    const socket = sockets[0]!;
    socket.message(encodeFrame(standingFrame(7, 1000)));
    socket.message(encodeFrame(standingFrame(7, 1033)));
    socket.message(encodeFrame(standingFrame(8, 1010)));
    expect(session.framesReceived).toBe(3);
    const avatars = session.avatars();
    expect(avatars.map((a) => a.userId)).toEqual([7, 8]);
    expect(session.peers.get(7)!.frame!.timestampMs).toBe(1033);
    expect(avatars[0]!.name).toBe("pat"); // roster info rides along
  });

  it("drops malformed packets with a warning and keeps running", () => {
    const { session, sockets, warnings } = joined();
    const socket = sockets[0]!;
    socket.message(new Uint8Array([1, 2, 3]).buffer);
    const garbage = encodeFrame(standingFrame(7, 1000));
    garbage[0] = 0x7f; // corrupt the tag
    socket.message(garbage);
    expect(session.framesDropped).toBe(2);
    expect(session.framesReceived).toBe(0);
    expect(warnings.filter((w) => w.includes("dropping malformed frame")).length).toBe(2);
    socket.message(encodeFrame(standingFrame(7, 2000)));
    expect(session.framesReceived).toBe(1);
  });

  it("ignores frames that arrive before the join completes", () => {
    const { session, sockets } = rig();
    session.connect();
    sockets[0]!.open();
    sockets[0]!.message(encodeFrame(standingFrame(7, 1000)));
    expect(session.framesDropped).toBe(1);
    expect(session.avatars()).toEqual([]);
  });

  it("prunes avatars that stop streaming but keeps the roster entry", () => {
    const { session, sockets, clock } = joined();
    sockets[0]!.message(encodeFrame(standingFrame(7, 1000)));
    expect(session.avatars().length).toBe(1);
    session.prune(clock.nowMs + STALE_AVATAR_MS + 1);
    expect(session.avatars()).toEqual([]);
    expect(session.peers.get(7)).toMatchObject({ role: "patient", name: "pat" });
  });
});

describe("feedback and metrics", () => {
  it("rejects empty feedback before it reaches the wire", () => {
    const { session, sockets, warnings } = joined();
    const sentBefore = sockets[0]!.sent.length;
    expect(session.sendFeedback("   ")).toBe(false);
    expect(session.sendFeedback("")).toBe(false);
    expect(sockets[0]!.sent.length).toBe(sentBefore);
    expect(warnings.filter((w) => w.includes("ignoring empty feedback")).length).toBe(2);
  });

  it("sends feedback immediately while joined", () => {
    const { session, sockets } = joined();
    expect(session.sendFeedback("  keep the knee over the toes  ")).toBe(true);
    const last = JSON.parse(sockets[0]!.sent[sockets[0]!.sent.length - 1] as string);
    expect(last).toEqual({
      type: "feedback",
      from_user_id: 42,
      text: "keep the knee over the toes",
    });
  });

  it("queues feedback while disconnected and flushes it on rejoin", () => {
    const { session, sockets, warnings } = joined();
    sockets[0]!.end();
    expect(session.sendFeedback("slower on the way down")).toBe(true);
    expect(warnings.some((w) => w.includes("feedback queued"))).toBe(true);

    vi.advanceTimersByTime(500);
    const socket = sockets[1]!;
    socket.open();
    ack(socket, 42);
    const flushed = socket.sent.map((s) => JSON.parse(s as string));
    expect(flushed).toContainEqual({
      type: "feedback",
      from_user_id: 42,
      text: "slower on the way down",
    });
  });

  it("logs echoed feedback and toasts cues from other users", () => {
    const { session, sockets, clock } = joined();
    const socket = sockets[0]!;
    socket.message(JSON.stringify({ type: "feedback", from_user_id: 7, text: "ready" }));
    socket.message(JSON.stringify({ type: "feedback", from_user_id: 42, text: "go" }));
    expect(session.feedbackLog.map((e) => e.text)).toEqual(["ready", "go"]);
    expect(session.feedbackLog[0]!.fromName).toBe("pat");
    expect(session.toasts.map((t) => t.text)).toEqual(["pat: ready"]); // own echo is not toasted
    session.prune(clock.nowMs + TOAST_LIFETIME_MS + 1);
    expect(session.toasts).toEqual([]);
  });

  it("stores metric updates verbatim, keyed by side", () => {
    const { session, sockets } = joined();
    const update = {
      type: "metric_update",
      exercise: "hip_abduction",
      side: "left",
      rep_count: 4,
      last_peak_deg: 38.75,
      last_velocity_dps: 71.5,
    };
    sockets[0]!.message(JSON.stringify(update));
    expect(session.metrics.get("left")).toEqual(update);
    expect(session.metrics.size).toBe(1);
  });

  it("removes peers on leave notices", () => {
    const { session, sockets } = joined();
    sockets[0]!.message(encodeFrame(standingFrame(7, 1000)));
    sockets[0]!.message(JSON.stringify({ type: "leave", user_id: 7 }));
    expect(session.peers.has(7)).toBe(false);
    expect(session.avatars()).toEqual([]);
  });
});

describe("receive-only guarantee", () => {
  it("only ever sends join, feedback, and leave control text", () => {
    const { session, sockets } = joined();
    const socket = sockets[0]!;
    socket.message(encodeFrame(standingFrame(7, 1000)));
    session.sendFeedback("good depth");
    session.close();
    for (const payload of sockets.flatMap((s) => s.sent)) {
      expect(typeof payload).toBe("string");
      const type = (JSON.parse(payload as string) as { type: string }).type;
      expect(["join", "feedback", "leave"]).toContain(type);
    }
  });
});
