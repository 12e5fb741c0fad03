#!/usr/bin/env python3
"""Regenerate the client/pipeline parity vectors.

The web client ships its own frame decoder and angle math; the analysis
package is the single source of truth for both.  This script freezes a set
of skeletons with their expected angles (``angle-vectors.json``) and a set
of wire packets with their decoded fields (``frame-vectors.json``).  Both
test suites assert their own implementation reproduces the committed
vectors, so regenerate only when the angle definitions or the wire format
deliberately change — and expect both suites to notice.

Deterministic: fixed seed, all coordinates rounded through float32 so the
JSON round-trips bit-exactly into every IEEE-754 runtime.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np

from telephyt.errors import AnalysisError
from telephyt.kinematics import (
    Exercise,
    Side,
    hip_angle,
    hip_frontal_angle,
    hip_sagittal_angle,
)
from telephyt.protocol import encode_frame
from telephyt.skeleton import JOINT_COUNT, Confidence, Joint, JointId, SkeletonFrame
from telephyt.synth import pose_frame

OUT_DIR = Path(__file__).resolve().parent
SEED = 20260818


def _f32(value: float) -> float:
    return float(np.float32(value))


def _rounded(frame: SkeletonFrame) -> SkeletonFrame:
    joints = tuple(
        Joint((_f32(x), _f32(y), _f32(z)), j.confidence)
        for j in frame.joints
        for x, y, z in (j.position,)
    )
    return SkeletonFrame(frame.user_id, frame.timestamp_ms, joints)


def _joints_json(frame: SkeletonFrame) -> list[list[float | int]]:
    return [[*j.position, int(j.confidence)] for j in frame.joints]


def _result(fn) -> dict:
    try:
        return {"value": fn()}
    except AnalysisError as exc:
        return {"error": str(exc)}


def _angle_case(name: str, frame: SkeletonFrame) -> dict:
    frame = _rounded(frame)
    results: dict[str, dict] = {}
    for side in Side:
        results[f"hip_sagittal:{side.value}"] = _result(
            lambda s=side: hip_sagittal_angle(frame, s)
        )
        results[f"hip_frontal:{side.value}"] = _result(
            lambda s=side: hip_frontal_angle(frame, s)
        )
        for exercise in Exercise:
            results[f"hip_angle:{exercise.value}:{side.value}"] = _result(
                lambda e=exercise, s=side: hip_angle(frame, e, s)
            )
    return {"name": name, "joints": _joints_json(frame), "results": results}


def _random_frame(rng: random.Random) -> SkeletonFrame:
    while True:
        joints = tuple(
            Joint(
                (
                    rng.uniform(-1.0, 1.0),
                    rng.uniform(0.0, 2.0),
                    rng.uniform(1.5, 3.5),
                ),
                Confidence(rng.choice((1, 2, 2, 2))),
            )
            for _ in range(JOINT_COUNT)
        )
        frame = SkeletonFrame(1, 0, joints)
        try:  # keep only frames where every vector result is a clean value
            for side in Side:
                hip_sagittal_angle(frame, side)
                hip_frontal_angle(frame, side)
        except AnalysisError:
            continue
        return frame


def _canonical_pelvis() -> list[Joint]:
    joints = [Joint((0.0, 0.0, 2.5)) for _ in range(JOINT_COUNT)]
    joints[JointId.HIP_L] = Joint((-0.1, 1.0, 2.5))
    joints[JointId.HIP_R] = Joint((0.1, 1.0, 2.5))
    joints[JointId.SPINE_BASE] = Joint((0.0, 1.0, 2.5))
    joints[JointId.SPINE_MID] = Joint((0.0, 1.5, 2.5))
    joints[JointId.KNEE_L] = Joint((-0.1, 0.55, 2.5))
    joints[JointId.KNEE_R] = Joint((0.1, 0.55, 2.5))
    return joints


def _degenerate_cases() -> list[dict]:
    cases = []

    joints = _canonical_pelvis()
    joints[JointId.HIP_L] = joints[JointId.HIP_R]
    cases.append(_angle_case("degenerate: hips coincide", SkeletonFrame(1, 0, tuple(joints))))

    joints = _canonical_pelvis()
    joints[JointId.SPINE_MID] = Joint((0.3, 1.0, 2.5))  # along the hip axis
    cases.append(
        _angle_case("degenerate: trunk on hip axis", SkeletonFrame(1, 0, tuple(joints)))
    )

    joints = _canonical_pelvis()
    joints[JointId.KNEE_R] = Joint((0.55, 1.0, 2.5))  # thigh purely lateral
    cases.append(
        _angle_case("indeterminate: right thigh lateral", SkeletonFrame(1, 0, tuple(joints)))
    )

    joints = _canonical_pelvis()
    joints[JointId.KNEE_L] = Joint((-0.1, 1.0, 2.95))  # thigh purely forward
    cases.append(
        _angle_case("indeterminate: left thigh forward", SkeletonFrame(1, 0, tuple(joints)))
    )
    return cases


def build_angle_vectors() -> list[dict]:
    rng = random.Random(SEED)
    cases = []
    for exercise in Exercise:
        for side in Side:
            for theta in (5.0, 17.5, 40.0, 63.0):
                cases.append(
                    _angle_case(
                        f"posed {exercise.value} {side.value} theta={theta}",
                        pose_frame(exercise, side, theta),
                    )
                )
    for k in range(40):
        cases.append(_angle_case(f"random skeleton {k}", _random_frame(rng)))
    cases.extend(_degenerate_cases())
    return cases


def _frame_case(name: str, frame: SkeletonFrame) -> dict:
    packet = encode_frame(frame)
    decoded = _rounded(frame)
    return {
        "name": name,
        "packet_hex": packet.hex(),
        "user_id": frame.user_id,
        "timestamp_ms": frame.timestamp_ms,
        "joints": _joints_json(decoded),
    }


def build_frame_vectors() -> dict:
    rng = random.Random(SEED + 1)
    valid = [
        _frame_case(
            "posed abduction right 40 deg",
            pose_frame(Exercise.HIP_ABDUCTION, Side.RIGHT, 40.0, user_id=1, timestamp_ms=0),
        ),
        _frame_case(
            "posed squat left 63 deg",
            pose_frame(Exercise.SQUAT, Side.LEFT, 63.0, user_id=7, timestamp_ms=123_456),
        ),
        _frame_case(
            "max user id, large timestamp",
            pose_frame(
                Exercise.HIP_FLEXION,
                Side.RIGHT,
                17.5,
                user_id=0xFFFFFFFF,
                timestamp_ms=2**52,
            ),
        ),
    ]
    for k in range(12):
        joints = tuple(
            Joint(
                (
                    rng.uniform(-5.0, 5.0),
                    rng.uniform(-5.0, 5.0),
                    rng.uniform(-5.0, 5.0),
                ),
                Confidence(rng.choice((0, 1, 2))),
            )
            for _ in range(JOINT_COUNT)
        )
        frame = SkeletonFrame(
            rng.randrange(2**32), rng.randrange(2**48), joints
        )
        valid.append(_frame_case(f"fuzzed frame {k}", frame))

    base = bytearray(bytes.fromhex(valid[0]["packet_hex"]))
    invalid = [
        {"name": "truncated packet", "packet_hex": bytes(base[:-1]).hex()},
        {"name": "oversized packet", "packet_hex": bytes(base + b"\x00").hex()},
    ]
    bad_tag = bytearray(base)
    bad_tag[0] = 0x02
    invalid.append({"name": "wrong tag", "packet_hex": bytes(bad_tag).hex()})
    bad_conf = bytearray(base)
    bad_conf[13 + 13 * 5 + 12] = 3
    invalid.append({"name": "confidence out of range", "packet_hex": bytes(bad_conf).hex()})
    bad_pos = bytearray(base)
    bad_pos[13 : 13 + 4] = np.float32("nan").tobytes()
    invalid.append({"name": "NaN position", "packet_hex": bytes(bad_pos).hex()})
    inf_pos = bytearray(base)
    inf_pos[13 + 13 * 24 + 8 : 13 + 13 * 24 + 12] = np.float32("inf").tobytes()
    invalid.append({"name": "infinite position", "packet_hex": bytes(inf_pos).hex()})
    return {"valid": valid, "invalid": invalid}


def main() -> None:
    angle_path = OUT_DIR / "angle-vectors.json"
    frame_path = OUT_DIR / "frame-vectors.json"
    angle_path.write_text(json.dumps(build_angle_vectors(), indent=1) + "\n")
    frame_path.write_text(json.dumps(build_frame_vectors(), indent=1) + "\n")
    print(f"wrote {angle_path}")
    print(f"wrote {frame_path}")


if __name__ == "__main__":
    main()
