"""Core skeleton data types, validation, and uniform resampling.

The joint set is the 25-joint full-body skeleton delivered by markerless
infrared depth cameras.  Positions are meters in the camera frame
(x right, y up, z toward the camera, right-handed).  Timestamps are
integer milliseconds, strictly increasing within one user's stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

from .errors import AnalysisError

Vec3 = tuple[float, float, float]

MAX_POSITION_M = 10.0


class JointId(IntEnum):
    """The 25 tracked joints. Ordinals are fixed: they define the wire
    and file layout and must never be reordered."""

    SPINE_BASE = 0
    SPINE_MID = 1
    SPINE_SHOULDER = 2
    NECK = 3
    HEAD = 4
    SHOULDER_L = 5
    SHOULDER_R = 6
    ELBOW_L = 7
    ELBOW_R = 8
    WRIST_L = 9
    WRIST_R = 10
    HAND_L = 11
    HAND_R = 12
    HAND_TIP_L = 13
    HAND_TIP_R = 14
    THUMB_L = 15
    THUMB_R = 16
    HIP_L = 17
    HIP_R = 18
    KNEE_L = 19
    KNEE_R = 20
    ANKLE_L = 21
    ANKLE_R = 22
    FOOT_L = 23
    FOOT_R = 24


JOINT_COUNT = 25

# Bone segment list for stick-figure rendering (parent, child) pairs.
SKELETON_BONES: tuple[tuple[JointId, JointId], ...] = (
    (JointId.SPINE_BASE, JointId.SPINE_MID),
    (JointId.SPINE_MID, JointId.SPINE_SHOULDER),
    (JointId.SPINE_SHOULDER, JointId.NECK),
    (JointId.NECK, JointId.HEAD),
    (JointId.SPINE_SHOULDER, JointId.SHOULDER_L),
    (JointId.SHOULDER_L, JointId.ELBOW_L),
    (JointId.ELBOW_L, JointId.WRIST_L),
    (JointId.WRIST_L, JointId.HAND_L),
    (JointId.HAND_L, JointId.HAND_TIP_L),
    (JointId.WRIST_L, JointId.THUMB_L),
    (JointId.SPINE_SHOULDER, JointId.SHOULDER_R),
    (JointId.SHOULDER_R, JointId.ELBOW_R),
    (JointId.ELBOW_R, JointId.WRIST_R),
    (JointId.WRIST_R, JointId.HAND_R),
    (JointId.HAND_R, JointId.HAND_TIP_R),
    (JointId.WRIST_R, JointId.THUMB_R),
    (JointId.SPINE_BASE, JointId.HIP_L),
    (JointId.HIP_L, JointId.KNEE_L),
    (JointId.KNEE_L, JointId.ANKLE_L),
    (JointId.ANKLE_L, JointId.FOOT_L),
    (JointId.SPINE_BASE, JointId.HIP_R),
    (JointId.HIP_R, JointId.KNEE_R),
    (JointId.KNEE_R, JointId.ANKLE_R),
    (JointId.ANKLE_R, JointId.FOOT_R),
)


class Confidence(IntEnum):
    """Tracking confidence for one joint. Wire encoding is the raw value."""

    NOT_TRACKED = 0
    INFERRED = 1
    TRACKED = 2


@dataclass(frozen=True)
class Joint:
    """One tracked joint: position in meters plus tracking confidence."""

    position: Vec3
    confidence: Confidence = Confidence.TRACKED


@dataclass(frozen=True)
class SkeletonFrame:
    """One timestamped sample of all 25 joints for one user.

    ``joints`` is indexed by ``JointId`` ordinal and must have exactly
    25 entries. Instances are immutable and safe to share across tasks.
    """

    user_id: int
    timestamp_ms: int
    joints: tuple[Joint, ...]

    def joint(self, jid: JointId) -> Joint:
        return self.joints[jid]

    def position(self, jid: JointId) -> Vec3:
        return self.joints[jid].position


def validate_frame(frame: SkeletonFrame) -> list[str]:
    """Check all frame invariants; returns a list of violations (empty = ok).

    Total function: never raises on malformed content, it reports it.
    """
    violations: list[str] = []
    if not 0 <= frame.user_id <= 0xFFFFFFFF:
        violations.append(f"user_id out of range: {frame.user_id}")
    if not 0 <= frame.timestamp_ms <= 0xFFFFFFFFFFFFFFFF:
        violations.append(f"timestamp out of range: {frame.timestamp_ms}")
    if len(frame.joints) != JOINT_COUNT:
        violations.append(f"joint count: expected {JOINT_COUNT}, got {len(frame.joints)}")
    for i, joint in enumerate(frame.joints):
        x, y, z = joint.position
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            violations.append(f"non-finite position at joint {i}")
            continue
        if math.sqrt(x * x + y * y + z * z) >= MAX_POSITION_M:
            violations.append(f"position out of range at joint {i}")
        if joint.confidence not in (0, 1, 2):
            violations.append(f"invalid confidence at joint {i}")
    return violations


def _check_stream(frames: Sequence[SkeletonFrame]) -> None:
    if len(frames) < 2:
        raise AnalysisError("insufficient data: need at least 2 frames")
    for prev, cur in zip(frames, frames[1:]):
        if cur.timestamp_ms <= prev.timestamp_ms:
            raise AnalysisError(
                f"timestamps not strictly increasing at t={cur.timestamp_ms}"
            )


def uniform_grid_ms(t0_ms: int, last_ms: int, rate_hz: float) -> list[int]:
    """Integer-millisecond sample grid t0 + round(k*1000/rate), up to last_ms."""
    grid: list[int] = []
    k = 0
    while True:
        t = t0_ms + round(k * 1000.0 / rate_hz)
        if t > last_ms:
            break
        grid.append(t)
        k += 1
    return grid


def resample_uniform(
    frames: Sequence[SkeletonFrame], target_rate: float = 30.0
) -> list[SkeletonFrame]:
    """Resample a jittered stream onto a uniform grid at ``target_rate`` Hz.

    Output timestamps are ``t0 + round(k*1000/rate)`` ms.  Joint positions
    are linearly interpolated between the bracketing input frames; the
    interpolated confidence is the pessimistic (min) of the two brackets,
    so uncertain data is never upgraded.  Input already on the target grid
    passes through unchanged.

    Raises
    ------
    AnalysisError
        Fewer than 2 frames, or timestamps not strictly increasing.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    _check_stream(frames)

    grid = uniform_grid_ms(frames[0].timestamp_ms, frames[-1].timestamp_ms, target_rate)
    out: list[SkeletonFrame] = []
    i = 0  # index of left bracket
    for t in grid:
        while frames[i + 1].timestamp_ms < t:
            i += 1
        left, right = frames[i], frames[i + 1]
        if t == left.timestamp_ms:
            out.append(SkeletonFrame(left.user_id, t, left.joints))
            continue
        if t == right.timestamp_ms:
            out.append(SkeletonFrame(right.user_id, t, right.joints))
            continue
        w = (t - left.timestamp_ms) / (right.timestamp_ms - left.timestamp_ms)
        joints = tuple(
            Joint(
                (
                    (1.0 - w) * a.position[0] + w * b.position[0],
                    (1.0 - w) * a.position[1] + w * b.position[1],
                    (1.0 - w) * a.position[2] + w * b.position[2],
                ),
                min(a.confidence, b.confidence),
            )
            for a, b in zip(left.joints, right.joints)
        )
        out.append(SkeletonFrame(left.user_id, t, joints))
    return out


def frames_sorted_by_time(frames: Iterable[SkeletonFrame]) -> list[SkeletonFrame]:
    """Stable merge order used by the recording writer: (timestamp, user)."""
    return sorted(frames, key=lambda f: (f.timestamp_ms, f.user_id))
