"""Session recording container and on-disk format.

A recording bundles every skeleton frame relayed during a session with
the participant roster and any event labels (exercise start/end marks,
therapist notes).  The file format is deliberately simple::

    b"TPR1\\n"                      magic + version
    <header JSON, one line>\\n      roster, exercises, rate hint, labels
    <frame packets>                 concatenated 338-byte wire packets,
                                    sorted by (timestamp_ms, user_id)

Frames reuse the wire encoding verbatim, so a recording body can be
replayed onto a socket without re-serialization.  Writing the same
recording twice produces byte-identical files.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, replace
from typing import BinaryIO, Iterable, Mapping

from .errors import DecodeError, RecordingFormatError
from .protocol import FRAME_PACKET_SIZE, PeerInfo, Role, decode_frame, encode_frame
from .skeleton import SkeletonFrame, frames_sorted_by_time

MAGIC = b"TPR1\n"

LABEL_KINDS = ("start", "end", "note")


@dataclass(frozen=True)
class EventLabel:
    """A timestamped annotation: exercise start/end or a free-text note."""

    timestamp_ms: int
    kind: str  # one of LABEL_KINDS
    text: str = ""


@dataclass(frozen=True)
class RecordingHeader:
    room_id: str
    participants: tuple[PeerInfo, ...] = ()
    exercises: tuple[str, ...] = ()
    rate_hint_hz: float = 30.0


@dataclass(frozen=True)
class Recording:
    """An in-memory session recording.

    ``frames`` is the merged stream in canonical (timestamp, user) order;
    use :meth:`frames_for` to pull out one participant's stream.
    """

    header: RecordingHeader
    frames: tuple[SkeletonFrame, ...] = ()
    labels: tuple[EventLabel, ...] = ()

    @staticmethod
    def build(
        header: RecordingHeader,
        frames: Iterable[SkeletonFrame] | Mapping[int, Iterable[SkeletonFrame]],
        labels: Iterable[EventLabel] = (),
    ) -> "Recording":
        """Assemble a recording, merging per-user streams into canonical order."""
        if isinstance(frames, Mapping):
            merged: list[SkeletonFrame] = []
            for user_frames in frames.values():
                merged.extend(user_frames)
        else:
            merged = list(frames)
        return Recording(
            header,
            tuple(frames_sorted_by_time(merged)),
            tuple(sorted(labels, key=lambda l: (l.timestamp_ms, l.kind, l.text))),
        )

    @property
    def user_ids(self) -> tuple[int, ...]:
        seen: dict[int, None] = {}
        for f in self.frames:
            seen.setdefault(f.user_id, None)
        return tuple(seen)

    def frames_for(self, user_id: int) -> tuple[SkeletonFrame, ...]:
        return tuple(f for f in self.frames if f.user_id == user_id)

    @property
    def span_ms(self) -> tuple[int, int]:
        if not self.frames:
            raise RecordingFormatError("empty recording has no time span")
        return self.frames[0].timestamp_ms, self.frames[-1].timestamp_ms


def _validate(rec: Recording) -> None:
    known = {p.user_id for p in rec.header.participants}
    if len(known) != len(rec.header.participants):
        raise RecordingFormatError("duplicate participant user_id")
    last_by_user: dict[int, int] = {}
    prev_key: tuple[int, int] | None = None
    for f in rec.frames:
        if f.user_id not in known:
            raise RecordingFormatError(f"frame from unknown user {f.user_id}")
        key = (f.timestamp_ms, f.user_id)
        if prev_key is not None and key < prev_key:
            raise RecordingFormatError("frames not in (timestamp, user) order")
        prev_key = key
        last = last_by_user.get(f.user_id)
        if last is not None and f.timestamp_ms <= last:
            raise RecordingFormatError(
                f"timestamps not strictly increasing for user {f.user_id}"
            )
        last_by_user[f.user_id] = f.timestamp_ms
    if rec.labels:
        if not rec.frames:
            raise RecordingFormatError("labels require at least one frame")
        lo, hi = rec.span_ms
        for label in rec.labels:
            if label.kind not in LABEL_KINDS:
                raise RecordingFormatError(f"unknown label kind: {label.kind}")
            if not lo <= label.timestamp_ms <= hi:
                raise RecordingFormatError(
                    f"label at {label.timestamp_ms} ms outside recorded range"
                )
    if rec.header.rate_hint_hz <= 0:
        raise RecordingFormatError("rate_hint_hz must be positive")


def _header_json(rec: Recording) -> bytes:
    payload = {
        "room_id": rec.header.room_id,
        "participants": [
            {"user_id": p.user_id, "role": p.role.value, "display_name": p.display_name}
            for p in rec.header.participants
        ],
        "exercises": list(rec.header.exercises),
        "rate_hint_hz": rec.header.rate_hint_hz,
        "labels": [
            {"timestamp_ms": l.timestamp_ms, "kind": l.kind, "text": l.text}
            for l in rec.labels
        ],
    }
    return json.dumps(payload, separators=(",", ":"), sort_keys=True).encode("utf-8")


def write_recording(rec: Recording, dest: str | os.PathLike | BinaryIO) -> int:
    """Serialize a recording; returns the number of bytes written.

    Raises
    ------
    RecordingFormatError
        The recording violates a structural invariant (unknown user,
        out-of-order frames, label outside the recorded range, ...).
    ValueError
        A frame cannot be encoded (non-finite position etc.).
    """
    _validate(rec)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_header_json(rec))
    buf.write(b"\n")
    for f in rec.frames:
        buf.write(encode_frame(f))
    data = buf.getvalue()
    if hasattr(dest, "write"):
        dest.write(data)  # type: ignore[union-attr]
    else:
        with open(dest, "wb") as fh:
            fh.write(data)
    return len(data)


def _parse_header(raw: bytes) -> tuple[RecordingHeader, tuple[EventLabel, ...]]:
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RecordingFormatError(f"malformed header: {exc}") from exc
    if not isinstance(obj, dict):
        raise RecordingFormatError("malformed header: not a JSON object")
    try:
        participants = tuple(
            PeerInfo(int(p["user_id"]), Role(p["role"]), str(p["display_name"]))
            for p in obj.get("participants", [])
        )
        labels = tuple(
            EventLabel(int(l["timestamp_ms"]), str(l["kind"]), str(l.get("text", "")))
            for l in obj.get("labels", [])
        )
        header = RecordingHeader(
            room_id=str(obj["room_id"]),
            participants=participants,
            exercises=tuple(str(e) for e in obj.get("exercises", [])),
            rate_hint_hz=float(obj.get("rate_hint_hz", 30.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordingFormatError(f"malformed header: {exc}") from exc
    return header, labels


def read_recording(src: str | os.PathLike | BinaryIO) -> Recording:
    """Parse a recording file, validating every structural invariant.

    All malformed inputs raise :class:`RecordingFormatError` with a
    message naming the problem.
    """
    if hasattr(src, "read"):
        data = src.read()  # type: ignore[union-attr]
    else:
        with open(src, "rb") as fh:
            data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise RecordingFormatError("bad magic: not a recording file")
    nl = data.find(b"\n", len(MAGIC))
    if nl < 0:
        raise RecordingFormatError("malformed header: unterminated header line")
    header, labels = _parse_header(data[len(MAGIC) : nl])
    body = data[nl + 1 :]
    if len(body) % FRAME_PACKET_SIZE != 0:
        raise RecordingFormatError("truncated frame block")
    frames: list[SkeletonFrame] = []
    for i in range(0, len(body), FRAME_PACKET_SIZE):
        try:
            frames.append(decode_frame(body[i : i + FRAME_PACKET_SIZE]))
        except DecodeError as exc:
            raise RecordingFormatError(
                f"frame block {i // FRAME_PACKET_SIZE}: {exc}"
            ) from exc
    rec = Recording(header, tuple(frames), labels)
    _validate(rec)
    return rec


def with_labels(rec: Recording, labels: Iterable[EventLabel]) -> Recording:
    """Return a copy with ``labels`` replacing the existing ones, sorted."""
    return replace(
        rec, labels=tuple(sorted(labels, key=lambda l: (l.timestamp_ms, l.kind, l.text)))
    )
