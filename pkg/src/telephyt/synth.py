"""Deterministic synthetic skeleton generator and recording replayer.

The generator is the hardware-free stand-in for a depth camera and the
ground-truth oracle for the analysis pipeline: it poses a kinematic chain
so that the scripted hip angle — measured by this package's own angle
definitions — follows the requested profile exactly.  Identical
(script, body) inputs produce identical frames, byte for byte.

Scripts serialize as JSON, e.g.::

    {"exercise": "hip_abduction", "side": "right", "n_reps": 12,
     "amplitude_deg": 40.0, "period_s": 4.0, "rest_s": 1.0,
     "profile": "half_sine", "noise_sd_deg": 0.0, "seed": 7}
"""

from __future__ import annotations

import asyncio
import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Awaitable, Callable, Iterable

import numpy as np

from .errors import RecordingFormatError
from .kinematics import Exercise, Side
from .protocol import encode_frame
from .recording import Recording
from .skeleton import JOINT_COUNT, Confidence, Joint, JointId, SkeletonFrame, Vec3

PROFILES = ("half_sine", "linear_ramp")


@dataclass(frozen=True)
class ExerciseScript:
    """One scripted exercise bout.

    The timeline is rest, then ``n_reps`` repetitions of ``period_s``
    each separated (and followed) by ``rest_s`` of neutral stance.
    ``amplitude_deg`` may be 0 for a neutral-stance hold.
    """

    exercise: Exercise
    side: Side
    n_reps: int = 12
    amplitude_deg: float = 40.0
    period_s: float = 4.0
    rest_s: float = 1.0
    profile: str = "half_sine"
    noise_sd_deg: float = 0.0
    cartesian_jitter_m: float = 0.0
    seed: int = 0
    user_id: int = 1

    def __post_init__(self):
        if not 0.0 <= self.amplitude_deg <= 120.0:
            raise ValueError("amplitude_deg must lie in [0, 120]")
        if self.period_s < 0.5:
            raise ValueError("period_s must be at least 0.5 s")
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if self.rest_s < 0:
            raise ValueError("rest_s must be non-negative")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}")
        if self.noise_sd_deg < 0 or self.cartesian_jitter_m < 0:
            raise ValueError("noise levels must be non-negative")

    @property
    def duration_s(self) -> float:
        return self.rest_s + self.n_reps * (self.period_s + self.rest_s)

    def angle_at(self, t_s: float) -> float:
        """Noise-free scripted angle at time ``t_s`` from bout start."""
        t = t_s - self.rest_s
        if t < 0:
            return 0.0
        cycle = self.period_s + self.rest_s
        k = int(t // cycle)
        if k >= self.n_reps:
            return 0.0
        u = (t - k * cycle) / self.period_s
        if u >= 1.0:
            return 0.0
        if self.profile == "half_sine":
            return self.amplitude_deg * math.sin(math.pi * u)
        return self.amplitude_deg * (2.0 * u if u < 0.5 else 2.0 * (1.0 - u))

    def to_json(self) -> str:
        d = asdict(self)
        d["exercise"] = self.exercise.value
        d["side"] = self.side.value
        return json.dumps(d, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ExerciseScript":
        try:
            obj = json.loads(text)
            kwargs = dict(obj)
            kwargs["exercise"] = Exercise(obj["exercise"])
            kwargs["side"] = Side(obj["side"])
            return ExerciseScript(**kwargs)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"invalid exercise script: {exc}") from exc


@dataclass(frozen=True)
class BodyModel:
    """Segment lengths (meters) and where the avatar stands."""

    pelvis_width: float = 0.20
    trunk: float = 0.50
    thigh: float = 0.45
    shank: float = 0.42
    root: Vec3 = (0.0, 1.0, 2.5)  # SpineBase position in camera space

    def __post_init__(self):
        if min(self.pelvis_width, self.trunk, self.thigh, self.shank) <= 0:
            raise ValueError("all segment lengths must be positive")


# Thigh direction in the pelvis basis (lateral, up, forward) for a given
# exercise angle.  The canonical stance is axis-aligned: lateral = +x,
# up = +y, forward = +z, so these expressions invert the measured-angle
# definitions exactly.
def _thigh_direction(exercise: Exercise, side: Side, theta_deg: float) -> Vec3:
    r = math.radians(theta_deg)
    if exercise is Exercise.HIP_ABDUCTION:
        lat = math.sin(r) if side is Side.RIGHT else -math.sin(r)
        return (lat, -math.cos(r), 0.0)
    if exercise is Exercise.HIP_EXTENSION:
        return (0.0, -math.cos(r), -math.sin(r))
    # flexion and squats: thigh swings toward forward
    return (0.0, -math.cos(r), math.sin(r))


def _leg_joints(
    hip: Vec3, direction: Vec3, body: BodyModel, knee_extended: bool
) -> tuple[Vec3, Vec3, Vec3]:
    knee = (
        hip[0] + body.thigh * direction[0],
        hip[1] + body.thigh * direction[1],
        hip[2] + body.thigh * direction[2],
    )
    shank_dir = direction if knee_extended else (0.0, -1.0, 0.0)
    ankle = (
        knee[0] + body.shank * shank_dir[0],
        knee[1] + body.shank * shank_dir[1],
        knee[2] + body.shank * shank_dir[2],
    )
    foot = (ankle[0], ankle[1] - 0.03, ankle[2] + 0.12)
    return knee, ankle, foot


def pose_frame(
    exercise: Exercise,
    side: Side,
    theta_deg: float,
    body: BodyModel = BodyModel(),
    user_id: int = 1,
    timestamp_ms: int = 0,
) -> SkeletonFrame:
    """Pose one frame whose measured exercise angle equals ``theta_deg``.

    Squats move both legs; the other exercises move only ``side``, with
    the opposite leg in neutral stance.  Knee-extended exercises
    (abduction, extension) keep the shank aligned with the thigh; flexion
    and squats let the shank hang vertically.
    """
    rx, ry, rz = body.root
    hw = body.pelvis_width / 2.0
    positions: dict[JointId, Vec3] = {}

    positions[JointId.SPINE_BASE] = (rx, ry, rz)
    positions[JointId.SPINE_MID] = (rx, ry + 0.5 * body.trunk, rz)
    positions[JointId.SPINE_SHOULDER] = (rx, ry + body.trunk, rz)
    positions[JointId.NECK] = (rx, ry + body.trunk + 0.08, rz)
    positions[JointId.HEAD] = (rx, ry + body.trunk + 0.22, rz)
    for sign, sh, el, wr, ha, tip, th in (
        (-1, JointId.SHOULDER_L, JointId.ELBOW_L, JointId.WRIST_L,
         JointId.HAND_L, JointId.HAND_TIP_L, JointId.THUMB_L),
        (+1, JointId.SHOULDER_R, JointId.ELBOW_R, JointId.WRIST_R,
         JointId.HAND_R, JointId.HAND_TIP_R, JointId.THUMB_R),
    ):
        sx = rx + sign * 0.18
        sy = ry + body.trunk - 0.02
        positions[sh] = (sx, sy, rz)
        positions[el] = (sx + sign * 0.02, sy - 0.28, rz)
        positions[wr] = (sx + sign * 0.03, sy - 0.54, rz)
        positions[ha] = (sx + sign * 0.03, sy - 0.62, rz)
        positions[tip] = (sx + sign * 0.03, sy - 0.69, rz)
        positions[th] = (sx + sign * 0.005, sy - 0.56, rz + 0.04)

    hip_l: Vec3 = (rx - hw, ry, rz)
    hip_r: Vec3 = (rx + hw, ry, rz)
    positions[JointId.HIP_L] = hip_l
    positions[JointId.HIP_R] = hip_r

    knee_extended = exercise in (Exercise.HIP_ABDUCTION, Exercise.HIP_EXTENSION)
    both = exercise is Exercise.SQUAT
    for leg, hip in ((Side.LEFT, hip_l), (Side.RIGHT, hip_r)):
        angle = theta_deg if (both or leg == side) else 0.0
        direction = _thigh_direction(exercise, leg, angle)
        knee, ankle, foot = _leg_joints(hip, direction, body, knee_extended)
        if leg is Side.LEFT:
            positions[JointId.KNEE_L], positions[JointId.ANKLE_L] = knee, ankle
            positions[JointId.FOOT_L] = foot
        else:
            positions[JointId.KNEE_R], positions[JointId.ANKLE_R] = knee, ankle
            positions[JointId.FOOT_R] = foot

    joints = tuple(
        Joint(positions[JointId(i)], Confidence.TRACKED) for i in range(JOINT_COUNT)
    )
    return SkeletonFrame(user_id, timestamp_ms, joints)


def generate(
    script: ExerciseScript,
    body: BodyModel = BodyModel(),
    rate_hz: float = 30.0,
    start_ms: int = 0,
) -> list[SkeletonFrame]:
    """Generate the scripted bout as a uniformly timestamped frame list.

    Noise is angular (added to the scripted angle before posing) so the
    profile itself remains the analytic ground truth; optional Cartesian
    jitter perturbs every joint after posing.  Deterministic for a given
    (script, body, rate): the same inputs always produce the same frames.
    """
    rng = np.random.default_rng(script.seed)
    n = int(math.floor(script.duration_s * rate_hz)) + 1
    frames: list[SkeletonFrame] = []
    for k in range(n):
        t = k / rate_hz
        theta = script.angle_at(t)
        if script.noise_sd_deg > 0:
            theta += script.noise_sd_deg * rng.standard_normal()
        frame = pose_frame(
            script.exercise,
            script.side,
            theta,
            body,
            script.user_id,
            start_ms + round(k * 1000.0 / rate_hz),
        )
        if script.cartesian_jitter_m > 0:
            jitter = script.cartesian_jitter_m * rng.standard_normal((JOINT_COUNT, 3))
            frame = SkeletonFrame(
                frame.user_id,
                frame.timestamp_ms,
                tuple(
                    Joint(
                        (
                            j.position[0] + jitter[i][0],
                            j.position[1] + jitter[i][1],
                            j.position[2] + jitter[i][2],
                        ),
                        j.confidence,
                    )
                    for i, j in enumerate(frame.joints)
                ),
            )
        frames.append(frame)
    return frames


async def replay(
    recording: Recording,
    send: Callable[[bytes], Awaitable[None]],
    speed: float = 1.0,
    users: Iterable[int] | None = None,
) -> int:
    """Stream a recording's frames in real time, like a live capture.

    Frames are emitted on the recording's own schedule with inter-frame
    delays scaled by ``1/speed``; timestamps are rewritten onto the
    emission clock (wall time at start plus scaled offsets), so receivers
    see a live monotonic stream.  ``users`` restricts replay to the given
    user ids.  Returns the number of frames sent.

    Raises
    ------
    RecordingFormatError
        The recording (after the ``users`` filter) contains no frames.
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    wanted = set(users) if users is not None else None
    frames = [
        f for f in recording.frames if wanted is None or f.user_id in wanted
    ]
    if not frames:
        raise RecordingFormatError("empty recording: nothing to replay")

    loop = asyncio.get_running_loop()
    wall_start_ms = int(time.time() * 1000)
    loop_start = loop.time()
    t0 = frames[0].timestamp_ms
    sent = 0
    for f in frames:
        offset_s = (f.timestamp_ms - t0) / 1000.0 / speed
        delay = loop_start + offset_s - loop.time()
        if delay > 0:
            await asyncio.sleep(delay)
        shifted = SkeletonFrame(
            f.user_id, wall_start_ms + round((f.timestamp_ms - t0) / speed), f.joints
        )
        await send(encode_frame(shifted))
        sent += 1
    return sent
