"""Multi-room relay hub.

Participants join rooms by role over one WebSocket endpoint (``/ws``).
Binary skeleton-frame packets are relayed byte-identical to every other
room member, preserving per-sender order; control messages handle
join/leave bookkeeping, coaching feedback, and live metrics.  Sessions
can be recorded server-side.

Concurrency: each room's state is mutated under its own lock, so relay
for different rooms proceeds in parallel; nothing locks across rooms.
Slow receivers never stall a room — each receiver keeps only the newest
pending frame per sender and skips the ones it missed (frames are
display state, freshness beats completeness).

HTTP surface (same listener): ``GET /healthz`` -> "ok", ``GET /rooms`` ->
JSON room summary, ``GET /rooms/<id>/recording/start|stop`` -> recording
control, and optionally a static site at ``/``.  The server accepts only
GET, so recording control rides on GET rather than POST.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
import mimetypes
import re
import time
from collections import deque
from dataclasses import dataclass
from http import HTTPStatus
from pathlib import Path

from websockets.asyncio.server import Server, ServerConnection, serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Request, Response

from .errors import DecodeError, HubError, TelephytError
from .protocol import (
    FRAME_PACKET_SIZE,
    ControlMessage,
    ErrorMsg,
    Feedback,
    Join,
    JoinAck,
    Leave,
    MetricUpdate,
    PeerInfo,
    Role,
    decode_control,
    decode_frame,
    encode_control,
)
from .recording import EventLabel, Recording, RecordingHeader, write_recording

log = logging.getLogger(__name__)

POLICY_VIOLATION = 1008


@dataclass(frozen=True)
class HubConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    max_rooms: int = 64
    max_rate_hz: float = 60.0  # per-sender frame rate cap
    rec_dir: str | None = None  # when set, rooms record automatically
    idle_timeout_s: float = 60.0  # empty rooms are collected after this
    static_dir: str | None = None  # serve a built client at /

    def __post_init__(self):
        if self.max_rate_hz < 1:
            raise ValueError("max_rate_hz must be at least 1")
        if self.max_rooms < 1:
            raise ValueError("max_rooms must be at least 1")


class _Recorder:
    """Accumulates one room's relayed traffic until finalized."""

    def __init__(self, room_id: str, path: Path):
        self.room_id = room_id
        self.path = path
        self.frames: list = []
        self.labels: list[EventLabel] = []
        self.roster: dict[int, PeerInfo] = {}
        self._last_ts: int | None = None

    def track(self, peer: PeerInfo) -> None:
        self.roster[peer.user_id] = peer

    def add_frame(self, frame, via: PeerInfo) -> None:
        if frame.user_id not in self.roster:
            # A connection may forward frames for a user id that never joined
            # this room (a replayed session keeps its original ids); roster
            # the id under the forwarding connection so the file stays
            # self-describing.
            self.roster[frame.user_id] = PeerInfo(
                frame.user_id, via.role, via.display_name
            )
        self.frames.append(frame)
        self._last_ts = frame.timestamp_ms

    def add_label(self, kind: str, text: str) -> None:
        # Labels are timestamped on the recording's own clock: the latest
        # frame seen so far, clamped into range at finalize.
        self.labels.append(EventLabel(self._last_ts or 0, kind, text))

    def finalize(self) -> Path:
        labels: list[EventLabel] = []
        if self.frames:
            lo = min(f.timestamp_ms for f in self.frames)
            hi = max(f.timestamp_ms for f in self.frames)
            labels = [
                EventLabel(min(max(l.timestamp_ms, lo), hi), l.kind, l.text)
                for l in self.labels
            ]
        elif self.labels:
            log.warning("recording %s: dropping %d labels (no frames)",
                        self.path, len(self.labels))
        rec = Recording.build(
            RecordingHeader(
                room_id=self.room_id,
                participants=tuple(self.roster.values()),
                rate_hint_hz=30.0,
            ),
            self.frames,
            labels,
        )
        self.path.parent.mkdir(parents=True, exist_ok=True)
        write_recording(rec, self.path)
        log.info("recording finalized: %s (%d frames)", self.path, len(self.frames))
        return self.path


class _Participant:
    def __init__(self, user_id: int, role: Role, display_name: str,
                 ws: ServerConnection):
        self.user_id = user_id
        self.role = role
        self.display_name = display_name
        self.ws = ws
        self.last_frame_ts: dict[int, int] = {}  # packet user_id -> latest ts
        self.rate_window: deque[float] = deque()
        self._control: deque[str] = deque()
        self._frames: dict[int, bytes] = {}  # sender id -> newest packet
        self._wake = asyncio.Event()
        self._task: asyncio.Task | None = None

    @property
    def info(self) -> PeerInfo:
        return PeerInfo(self.user_id, self.role, self.display_name)

    def enqueue_control(self, text: str) -> None:
        self._control.append(text)
        self._wake.set()

    def enqueue_frame(self, sender_id: int, packet: bytes) -> None:
        self._frames[sender_id] = packet  # newest-wins per sender
        self._wake.set()

    def start_sender(self) -> None:
        self._task = asyncio.create_task(self._run_sender())

    async def stop_sender(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass

    async def _run_sender(self) -> None:
        try:
            while True:
                await self._wake.wait()
                self._wake.clear()
                while self._control:
                    await self.ws.send(self._control.popleft())
                while self._frames:
                    sender_id = next(iter(self._frames))
                    await self.ws.send(self._frames.pop(sender_id))
        except (ConnectionClosed, RuntimeError):
            return  # receiver went away; its own handler cleans up


class _Room:
    def __init__(self, room_id: str):
        self.room_id = room_id
        self.lock = asyncio.Lock()
        self.participants: dict[int, _Participant] = {}
        self.recorder: _Recorder | None = None
        self.dropped_frames = 0  # rate cap + non-monotonic timestamps
        self.empty_since: float | None = time.monotonic()
        self.closed = False

    def role_taken(self, role: Role) -> bool:
        return role in (Role.PATIENT, Role.THERAPIST) and any(
            p.role is role for p in self.participants.values()
        )

    def peers_of(self, user_id: int) -> list[_Participant]:
        return [p for uid, p in self.participants.items() if uid != user_id]


def _safe_name(room_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]", "_", room_id)[:64] or "room"


class Hub:
    """The relay service. ``start()`` binds the listener; ``close()`` shuts
    down gracefully, finalizing any open recordings."""

    def __init__(self, config: HubConfig = HubConfig()):
        self.config = config
        self.rooms: dict[str, _Room] = {}
        self._rooms_lock = asyncio.Lock()
        self._uid = itertools.count(1)
        self._server: Server | None = None
        self._reaper: asyncio.Task | None = None
        self._rec_seq = itertools.count(1)

    # -- lifecycle ---------------------------------------------------------

    async def start(self) -> None:
        self._server = await serve(
            self._handle,
            self.config.host,
            self.config.port,
            process_request=self._process_request,
            max_size=2**20,
        )
        self._reaper = asyncio.create_task(self._reap_idle_rooms())
        log.info("listening on %s:%d", self.config.host, self.port)

    @property
    def port(self) -> int:
        assert self._server is not None
        return self._server.sockets[0].getsockname()[1]  # type: ignore[index]

    async def close(self) -> None:
        if self._reaper is not None:
            self._reaper.cancel()
            try:
                await self._reaper
            except asyncio.CancelledError:
                pass
        async with self._rooms_lock:
            rooms = list(self.rooms.values())
            self.rooms.clear()
        for room in rooms:
            async with room.lock:
                room.closed = True
                self._finalize_quietly(room)
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def _reap_idle_rooms(self) -> None:
        interval = max(0.05, min(self.config.idle_timeout_s / 4.0, 5.0))
        while True:
            await asyncio.sleep(interval)
            now = time.monotonic()
            async with self._rooms_lock:
                idle = [
                    r for r in self.rooms.values()
                    if not r.participants
                    and r.empty_since is not None
                    and now - r.empty_since >= self.config.idle_timeout_s
                ]
                for room in idle:
                    del self.rooms[room.room_id]
            for room in idle:
                async with room.lock:
                    room.closed = True
                    self._finalize_quietly(room)
                log.info("room %s collected after idle timeout", room.room_id)

    # -- recording control ---------------------------------------------------

    def _recording_path(self, room_id: str) -> Path:
        base = Path(self.config.rec_dir or ".")
        stamp = time.strftime("%Y%m%d-%H%M%S")
        return base / f"{_safe_name(room_id)}-{stamp}-{next(self._rec_seq)}.tpr"

    async def start_recording(self, room_id: str) -> Path:
        """Begin recording a room; frames relayed from now on persist.

        Raises
        ------
        HubError
            Unknown room, or recording already in progress.
        """
        async with self._rooms_lock:
            room = self.rooms.get(room_id)
        if room is None:
            raise HubError(f"unknown room: {room_id}")
        async with room.lock:
            if room.recorder is not None:
                raise HubError("recording already in progress")
            room.recorder = _Recorder(room_id, self._recording_path(room_id))
            for p in room.participants.values():
                room.recorder.track(p.info)
            log.info("recording started: room %s -> %s", room_id, room.recorder.path)
            return room.recorder.path

    async def stop_recording(self, room_id: str) -> Path:
        """Finalize the room's recording and return the file path.

        Raises
        ------
        HubError
            Unknown room, or no recording in progress ("not recording").
        """
        async with self._rooms_lock:
            room = self.rooms.get(room_id)
        if room is None:
            raise HubError(f"unknown room: {room_id}")
        async with room.lock:
            if room.recorder is None:
                raise HubError("not recording")
            # Disarm before writing: a failed write must not leave the room
            # stuck in a recording state it can never leave.
            recorder, room.recorder = room.recorder, None
            return recorder.finalize()

    @staticmethod
    def _finalize_quietly(room: _Room) -> None:
        """Write a room's recording if one is armed; never raise."""
        if room.recorder is None:
            return
        recorder, room.recorder = room.recorder, None
        try:
            recorder.finalize()
        except (TelephytError, OSError):
            log.exception("recording for room %s was not written", room.room_id)

    # -- HTTP surface --------------------------------------------------------

    def _text_response(self, status: HTTPStatus, text: str,
                       content_type: str = "text/plain") -> Response:
        body = text.encode("utf-8")
        headers = Headers(
            [("Content-Type", f"{content_type}; charset=utf-8"),
             ("Content-Length", str(len(body))),
             ("Cache-Control", "no-store")]
        )
        return Response(status.value, status.phrase, headers, body)

    def _rooms_summary(self) -> str:
        rooms = []
        for room in self.rooms.values():
            rooms.append(
                {
                    "room_id": room.room_id,
                    "participants": [
                        {
                            "user_id": p.user_id,
                            "role": p.role.value,
                            "display_name": p.display_name,
                        }
                        for p in room.participants.values()
                    ],
                    "recording": room.recorder is not None,
                    "dropped_frames": room.dropped_frames,
                }
            )
        return json.dumps({"rooms": rooms}, indent=2) + "\n"

    def _serve_static(self, path: str) -> Response:
        if self.config.static_dir is None:
            return self._text_response(HTTPStatus.NOT_FOUND, "not found\n")
        root = Path(self.config.static_dir).resolve()
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not target.is_relative_to(root) or not target.is_file():
            return self._text_response(HTTPStatus.NOT_FOUND, "not found\n")
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        body = target.read_bytes()
        headers = Headers(
            [("Content-Type", ctype), ("Content-Length", str(len(body)))]
        )
        return Response(HTTPStatus.OK.value, HTTPStatus.OK.phrase, headers, body)

    async def _process_request(self, conn: ServerConnection, request: Request):
        path = request.path.split("?", 1)[0]
        if path == "/ws":
            return None  # continue the WebSocket handshake
        if path == "/healthz":
            return self._text_response(HTTPStatus.OK, "ok\n")
        if path == "/rooms":
            return self._text_response(
                HTTPStatus.OK, self._rooms_summary(), "application/json"
            )
        m = re.fullmatch(r"/rooms/([^/]+)/recording/(start|stop)", path)
        if m:
            return await self._recording_request(m.group(1), m.group(2))
        return self._serve_static(path)

    async def _recording_request(self, room_id: str, action: str) -> Response:
        try:
            if action == "start":
                path = await self.start_recording(room_id)
            else:
                path = await self.stop_recording(room_id)
        except HubError as exc:
            status = (HTTPStatus.NOT_FOUND if "unknown room" in str(exc)
                      else HTTPStatus.CONFLICT)
            return self._text_response(status, f"{exc}\n")
        except (TelephytError, OSError) as exc:
            log.exception("recording %s failed for room %s", action, room_id)
            return self._text_response(
                HTTPStatus.INTERNAL_SERVER_ERROR, f"recording {action} failed: {exc}\n"
            )
        return self._text_response(HTTPStatus.OK, f"{path}\n")

    # -- connection handling ---------------------------------------------------

    async def _reject(self, ws: ServerConnection, code: str, detail: str) -> None:
        try:
            await ws.send(encode_control(ErrorMsg(code, detail)))
            await ws.close(POLICY_VIOLATION, code)
        except ConnectionClosed:
            pass

    async def _handle(self, ws: ServerConnection) -> None:
        room: _Room | None = None
        me: _Participant | None = None
        try:
            async for message in ws:
                if me is None:
                    if isinstance(message, (bytes, bytearray)):
                        await self._reject(ws, "join required",
                                           "first message must be a join")
                        return
                    try:
                        msg = decode_control(message)
                    except DecodeError as exc:
                        await self._reject(ws, "bad message", str(exc))
                        return
                    if not isinstance(msg, Join):
                        await self._reject(ws, "join required",
                                           "first message must be a join")
                        return
                    room, me = await self._join(ws, msg)
                    if me is None:
                        return
                    continue
                assert room is not None
                if isinstance(message, (bytes, bytearray)):
                    if not await self._on_frame(room, me, ws, bytes(message)):
                        return
                else:
                    if not await self._on_control(room, me, ws, message):
                        return
        except ConnectionClosed:
            pass
        finally:
            if room is not None and me is not None:
                await self._leave(room, me)

    async def _join(
        self, ws: ServerConnection, msg: Join
    ) -> tuple[_Room | None, _Participant | None]:
        while True:
            async with self._rooms_lock:
                room = self.rooms.get(msg.room_id)
                if room is None:
                    if len(self.rooms) >= self.config.max_rooms:
                        await self._reject(ws, "capacity", "room limit reached")
                        return None, None
                    room = _Room(msg.room_id)
                    self.rooms[msg.room_id] = room
                    new_room = True
                else:
                    new_room = False
            async with room.lock:
                if room.closed:
                    continue  # lost a race with the reaper; retry
                if room.role_taken(msg.role):
                    await self._reject(ws, "role occupied",
                                       f"room already has a {msg.role.value}")
                    return None, None
                me = _Participant(next(self._uid), msg.role, msg.display_name, ws)
                peers = [p.info for p in room.participants.values()]
                room.participants[me.user_id] = me
                room.empty_since = None
                me.start_sender()
                if new_room and self.config.rec_dir is not None:
                    room.recorder = _Recorder(
                        room.room_id, self._recording_path(room.room_id)
                    )
                    log.info("auto-recording room %s -> %s",
                             room.room_id, room.recorder.path)
                if room.recorder is not None:
                    room.recorder.track(me.info)
                # Tell the joiner its id and peers; refresh everyone else's
                # roster with a JoinAck re-send (0 peers case included).
                me.enqueue_control(encode_control(JoinAck(me.user_id, tuple(peers))))
                for p in room.peers_of(me.user_id):
                    roster = tuple(
                        q.info for q in room.peers_of(p.user_id)
                    )
                    p.enqueue_control(encode_control(JoinAck(p.user_id, roster)))
            log.info("user %d (%s) joined room %s as %s",
                     me.user_id, msg.display_name, room.room_id, msg.role.value)
            return room, me

    async def _leave(self, room: _Room, me: _Participant) -> None:
        async with room.lock:
            if me.user_id not in room.participants:
                return
            del room.participants[me.user_id]
            if not room.participants:
                room.empty_since = time.monotonic()
            notice = encode_control(Leave(me.user_id))
            for p in room.participants.values():
                p.enqueue_control(notice)
        await me.stop_sender()
        log.info("user %d left room %s", me.user_id, room.room_id)

    async def _on_frame(
        self, room: _Room, me: _Participant, ws: ServerConnection, packet: bytes
    ) -> bool:
        if me.role is Role.OBSERVER:
            await self._reject(ws, "observers are receive-only",
                               "observer connections must not send frames")
            return False
        if len(packet) != FRAME_PACKET_SIZE:
            await self._reject(ws, "bad frame",
                               f"expected {FRAME_PACKET_SIZE} bytes")
            return False
        try:
            frame = decode_frame(packet)
        except DecodeError as exc:
            await self._reject(ws, "bad frame", str(exc))
            return False

        now = time.monotonic()
        window = me.rate_window
        while window and window[0] <= now - 1.0:
            window.popleft()
        if len(window) >= self.config.max_rate_hz:
            room.dropped_frames += 1
            return True  # over the rate cap: drop, count, keep connection
        window.append(now)

        last = me.last_frame_ts.get(frame.user_id)
        if last is not None and frame.timestamp_ms <= last:
            room.dropped_frames += 1
            return True  # out-of-order sender clock: drop rather than corrupt
        me.last_frame_ts[frame.user_id] = frame.timestamp_ms

        async with room.lock:
            if room.recorder is not None:
                room.recorder.add_frame(frame, me.info)
            for p in room.peers_of(me.user_id):
                p.enqueue_frame(me.user_id, packet)
        return True

    async def _on_control(
        self, room: _Room, me: _Participant, ws: ServerConnection, text: str
    ) -> bool:
        try:
            msg = decode_control(text)
        except DecodeError as exc:
            await self._reject(ws, "bad message", str(exc))
            return False
        if isinstance(msg, Join):
            await self._reject(ws, "already joined", "connection is in a room")
            return False
        if isinstance(msg, Leave):
            return False  # orderly exit; the finally block broadcasts it
        if isinstance(msg, Feedback):
            # Stamp the sender id so receivers can trust the attribution.
            stamped = encode_control(Feedback(me.user_id, msg.text))
            async with room.lock:
                if room.recorder is not None:
                    room.recorder.add_label(
                        "note", f"{me.display_name}: {msg.text}"
                    )
                for p in room.participants.values():
                    p.enqueue_control(stamped)
            return True
        if isinstance(msg, MetricUpdate):
            async with room.lock:
                for p in room.peers_of(me.user_id):
                    p.enqueue_control(text)
            return True
        await self._reject(ws, "unexpected message",
                           f"clients do not send {type(msg).__name__}")
        return False


async def run_hub(config: HubConfig, ready: asyncio.Event | None = None) -> None:
    """Run a hub until cancelled; used by the CLI ``serve`` command."""
    hub = Hub(config)
    await hub.start()
    if ready is not None:
        ready.set()
    try:
        await asyncio.Future()  # run forever
    except asyncio.CancelledError:
        raise
    finally:
        await hub.close()
