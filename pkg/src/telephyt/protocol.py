"""Wire protocol: binary skeleton frame packets and JSON control messages.

One WebSocket connection carries both kinds of message.  Binary messages
are fixed-size skeleton frame packets (338 bytes, little-endian).  Text
messages are JSON objects discriminated by a ``"type"`` field.

Frame packet layout (338 bytes, little-endian)::

    offset  size  field
    0       1     tag, always 0x01
    1       8     timestamp_ms, uint64
    9       4     user_id, uint32
    13      13*25 joints, each: x, y, z float32 followed by confidence uint8

At 30 Hz one stream costs 338 * 8 * 30 = 81.12 kbit/s before WebSocket
framing, comfortably inside a 125 kbit/s budget.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Any

from .errors import DecodeError
from .skeleton import JOINT_COUNT, Confidence, Joint, SkeletonFrame

FRAME_TAG = 0x01
_FRAME_STRUCT = struct.Struct("<BQI" + "fffB" * JOINT_COUNT)
FRAME_PACKET_SIZE = _FRAME_STRUCT.size  # 338

MAX_TEXT_MESSAGE_BYTES = 4096
MAX_FEEDBACK_CHARS = 512


class Role(str, Enum):
    """Participant role inside a session room."""

    PATIENT = "patient"
    THERAPIST = "therapist"
    OBSERVER = "observer"


# ---------------------------------------------------------------------------
# binary frame packets
# ---------------------------------------------------------------------------


def encode_frame(frame: SkeletonFrame) -> bytes:
    """Serialize one skeleton frame to its 338-byte wire packet.

    Raises
    ------
    ValueError
        Frame violates an invariant that cannot be represented on the
        wire (wrong joint count, non-finite position, range overflow).
    """
    if len(frame.joints) != JOINT_COUNT:
        raise ValueError(f"expected {JOINT_COUNT} joints, got {len(frame.joints)}")
    if not 0 <= frame.user_id <= 0xFFFFFFFF:
        raise ValueError(f"user_id out of range: {frame.user_id}")
    if not 0 <= frame.timestamp_ms <= 0xFFFFFFFFFFFFFFFF:
        raise ValueError(f"timestamp out of range: {frame.timestamp_ms}")
    fields: list[Any] = [FRAME_TAG, frame.timestamp_ms, frame.user_id]
    for i, joint in enumerate(frame.joints):
        x, y, z = joint.position
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            raise ValueError(f"non-finite position at joint {i}")
        if joint.confidence not in (0, 1, 2):
            raise ValueError(f"invalid confidence at joint {i}")
        fields.extend((x, y, z, int(joint.confidence)))
    return _FRAME_STRUCT.pack(*fields)


def decode_frame(packet: bytes) -> SkeletonFrame:
    """Parse a 338-byte wire packet back into a skeleton frame.

    Exact inverse of :func:`encode_frame` for frames whose coordinates
    are float32-representable.  Every malformed input raises
    :class:`DecodeError` with a distinct message; nothing else escapes.
    """
    if len(packet) != FRAME_PACKET_SIZE:
        raise DecodeError(
            f"bad packet length: expected {FRAME_PACKET_SIZE}, got {len(packet)}"
        )
    fields = _FRAME_STRUCT.unpack(packet)
    if fields[0] != FRAME_TAG:
        raise DecodeError(f"unexpected tag: 0x{fields[0]:02x}")
    timestamp_ms, user_id = fields[1], fields[2]
    joints: list[Joint] = []
    for i in range(JOINT_COUNT):
        x, y, z, conf = fields[3 + 4 * i : 7 + 4 * i]
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            raise DecodeError(f"non-finite position at joint {i}")
        if conf not in (0, 1, 2):
            raise DecodeError(f"invalid confidence {conf} at joint {i}")
        joints.append(Joint((x, y, z), Confidence(conf)))
    return SkeletonFrame(user_id, timestamp_ms, tuple(joints))


# ---------------------------------------------------------------------------
# JSON control messages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeerInfo:
    user_id: int
    role: Role
    display_name: str


@dataclass(frozen=True)
class Join:
    """Client -> server: request to enter a room under a role."""

    room_id: str
    role: Role
    display_name: str


@dataclass(frozen=True)
class JoinAck:
    """Server -> client: join accepted. Also re-sent to every member as the
    roster update whenever the peer list changes."""

    user_id: int
    peers: tuple[PeerInfo, ...] = ()


@dataclass(frozen=True)
class Feedback:
    """Free-text coaching cue, relayed to the whole room.

    ``from_user_id`` identifies the sender; the hub stamps it with the
    connection's real id before relaying, so receivers can trust it.
    """

    from_user_id: int
    text: str


@dataclass(frozen=True)
class MetricUpdate:
    """Per-repetition metric broadcast, relayed verbatim to all peers."""

    exercise: str
    side: str
    rep_count: int
    last_peak_deg: float
    last_velocity_dps: float


@dataclass(frozen=True)
class Leave:
    """Orderly exit: client announces it, and the hub broadcasts it to the
    remaining peers with the departed participant's id."""

    user_id: int


@dataclass(frozen=True)
class ErrorMsg:
    """Server -> client: request rejected; ``code`` is machine-readable."""

    code: str
    detail: str = ""


ControlMessage = Join | JoinAck | Feedback | MetricUpdate | Leave | ErrorMsg

_TYPE_NAMES: dict[type, str] = {
    Join: "join",
    JoinAck: "join_ack",
    Feedback: "feedback",
    MetricUpdate: "metric_update",
    Leave: "leave",
    ErrorMsg: "error",
}


def encode_control(msg: ControlMessage) -> str:
    """Serialize a control message to its JSON text form."""
    name = _TYPE_NAMES.get(type(msg))
    if name is None:
        raise ValueError(f"not a control message: {type(msg).__name__}")
    payload: dict[str, Any] = {"type": name}
    if isinstance(msg, Join):
        payload.update(room_id=msg.room_id, role=msg.role.value, display_name=msg.display_name)
    elif isinstance(msg, JoinAck):
        payload.update(
            user_id=msg.user_id,
            peers=[
                {"user_id": p.user_id, "role": p.role.value, "display_name": p.display_name}
                for p in msg.peers
            ],
        )
    elif isinstance(msg, Feedback):
        if len(msg.text) > MAX_FEEDBACK_CHARS:
            raise ValueError(f"feedback text over {MAX_FEEDBACK_CHARS} characters")
        payload.update(from_user_id=msg.from_user_id, text=msg.text)
    elif isinstance(msg, MetricUpdate):
        payload.update(
            exercise=msg.exercise,
            side=msg.side,
            rep_count=msg.rep_count,
            last_peak_deg=msg.last_peak_deg,
            last_velocity_dps=msg.last_velocity_dps,
        )
    elif isinstance(msg, Leave):
        payload.update(user_id=msg.user_id)
    elif isinstance(msg, ErrorMsg):
        payload.update(code=msg.code, detail=msg.detail)
    return json.dumps(payload, separators=(",", ":"))


def _require(obj: dict, key: str, kinds: type | tuple[type, ...]) -> Any:
    if key not in obj:
        raise DecodeError(f"missing field: {key}")
    value = obj[key]
    if not isinstance(value, kinds):
        raise DecodeError(f"wrong type for field {key}")
    if isinstance(value, bool) and kinds in (int, float, (int, float)):
        raise DecodeError(f"wrong type for field {key}")
    return value


def decode_control(text: str | bytes) -> ControlMessage:
    """Parse a JSON control message.

    Every malformed input — bad JSON, unknown type, missing or
    mistyped fields, oversized text — raises :class:`DecodeError`.
    """
    if isinstance(text, bytes):
        raise DecodeError("control messages must be text, not binary")
    if len(text.encode("utf-8", errors="replace")) > MAX_TEXT_MESSAGE_BYTES:
        raise DecodeError("control message too large")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise DecodeError("control message must be a JSON object")
    kind = _require(obj, "type", str)

    if kind == "join":
        role_raw = _require(obj, "role", str)
        try:
            role = Role(role_raw)
        except ValueError as exc:
            raise DecodeError(f"unknown role: {role_raw}") from exc
        name = _require(obj, "display_name", str)
        room_id = _require(obj, "room_id", str)
        if not room_id or len(room_id) > 64:
            raise DecodeError("room_id must be 1-64 characters")
        if len(name) > 64:
            raise DecodeError("display_name too long")
        return Join(room_id, role, name)

    if kind == "join_ack":
        raw_peers = _require(obj, "peers", list)
        peers = []
        for entry in raw_peers:
            if not isinstance(entry, dict):
                raise DecodeError("peer entry must be an object")
            try:
                role = Role(_require(entry, "role", str))
            except ValueError as exc:
                raise DecodeError("unknown peer role") from exc
            peers.append(
                PeerInfo(
                    _require(entry, "user_id", int),
                    role,
                    _require(entry, "display_name", str),
                )
            )
        return JoinAck(_require(obj, "user_id", int), tuple(peers))

    if kind == "feedback":
        text = _require(obj, "text", str)
        if len(text) > MAX_FEEDBACK_CHARS:
            raise DecodeError(f"feedback text over {MAX_FEEDBACK_CHARS} characters")
        return Feedback(_require(obj, "from_user_id", int), text)

    if kind == "metric_update":
        peak = _require(obj, "last_peak_deg", (int, float))
        vel = _require(obj, "last_velocity_dps", (int, float))
        if not (math.isfinite(peak) and math.isfinite(vel)):
            raise DecodeError("non-finite metric value")
        return MetricUpdate(
            _require(obj, "exercise", str),
            _require(obj, "side", str),
            _require(obj, "rep_count", int),
            float(peak),
            float(vel),
        )

    if kind == "leave":
        return Leave(_require(obj, "user_id", int))

    if kind == "error":
        return ErrorMsg(_require(obj, "code", str), str(obj.get("detail", "")))

    raise DecodeError(f"unknown message type: {kind}")
