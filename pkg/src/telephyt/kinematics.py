"""Hip joint kinematics: pelvis-anchored anatomical frames and exercise angles.

Angles are measured inside a body-fixed pelvis frame rebuilt on every
sample, so they are invariant to where the subject stands and which way
they face the camera.  Axes:

* ``lateral``  — left hip to right hip, unit length.
* ``up``       — pelvis-to-trunk direction, orthonormalized against lateral.
* ``forward``  — ``lateral x up`` (right-handed; toward the subject's front).

Exercise angles are projected angles of the thigh (hip -> knee) measured
with :func:`math.atan2`, signed so the exercised direction is positive and
the neutral standing pose is 0 degrees:

* abduction — frontal plane, positive away from the midline.
* flexion / squat — sagittal plane, positive toward ``forward``.
* extension — sagittal plane, positive toward the back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import butter, lfilter, lfilter_zi

from .errors import AnalysisError
from .skeleton import Confidence, Joint, JointId, SkeletonFrame, Vec3, resample_uniform

DEGENERATE_EPS_M = 0.01  # below this, a direction is geometrically meaningless
GAP_FILL_MAX_S = 0.2  # tracking dropouts up to this long are bridged linearly
FILTER_PAD_S = 1.0  # reflective padding applied on each side before filtering
FILTER_CUTOFF_HZ = 4.0
FILTER_ORDER = 2  # per pass; applied forward and backward for zero phase


class Exercise(str, Enum):
    HIP_ABDUCTION = "hip_abduction"
    HIP_EXTENSION = "hip_extension"
    HIP_FLEXION = "hip_flexion"
    SQUAT = "squat"


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class LimbStatus(str, Enum):
    """Study mapping of a leg to surgical laterality."""

    IMPAIRED = "impaired"
    INTACT = "intact"


def resolve_limb_status(side: Side, surgical_side: Side) -> LimbStatus:
    """Label a leg impaired or intact given the declared surgical side."""
    return LimbStatus.IMPAIRED if side == surgical_side else LimbStatus.INTACT


_SIDE_JOINTS = {
    Side.LEFT: (JointId.HIP_L, JointId.KNEE_L),
    Side.RIGHT: (JointId.HIP_R, JointId.KNEE_R),
}

_PELVIS_JOINTS = (JointId.HIP_L, JointId.HIP_R, JointId.SPINE_BASE, JointId.SPINE_MID)


def required_joints(side: Side) -> tuple[JointId, ...]:
    """Joints that must be tracked for the angle on ``side`` to exist."""
    hip, knee = _SIDE_JOINTS[side]
    return _PELVIS_JOINTS + (hip, knee)


def _sub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _dot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _norm(a: Vec3) -> float:
    return math.sqrt(_dot(a, a))


def _scale(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def _cross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


@dataclass(frozen=True)
class PelvisFrame:
    """Orthonormal body-fixed basis anchored at the pelvis."""

    origin: Vec3  # SpineBase position
    lateral: Vec3  # right-pointing
    up: Vec3
    forward: Vec3  # lateral x up


def pelvis_frame(frame: SkeletonFrame) -> PelvisFrame:
    """Build the anatomical basis for one sample.

    ``lateral`` points from the left hip to the right hip; ``up`` is the
    spine direction orthonormalized against it; ``forward`` completes the
    right-handed triad (``lateral x up``).

    Raises
    ------
    AnalysisError
        Hip joints coincide, or the trunk is collinear with the hip axis,
        leaving the basis undefined ("degenerate pelvis").
    """
    hip_l = frame.position(JointId.HIP_L)
    hip_r = frame.position(JointId.HIP_R)
    across = _sub(hip_r, hip_l)
    width = _norm(across)
    if width < DEGENERATE_EPS_M:
        raise AnalysisError("degenerate pelvis: hip joints coincide")
    lateral = _scale(across, 1.0 / width)
    trunk = _sub(frame.position(JointId.SPINE_MID), frame.position(JointId.SPINE_BASE))
    residual = _sub(trunk, _scale(lateral, _dot(trunk, lateral)))
    height = _norm(residual)
    if height < DEGENERATE_EPS_M:
        raise AnalysisError("degenerate pelvis: trunk collinear with hip axis")
    up = _scale(residual, 1.0 / height)
    return PelvisFrame(
        frame.position(JointId.SPINE_BASE), lateral, up, _cross(lateral, up)
    )


def _thigh(frame: SkeletonFrame, side: Side) -> Vec3:
    hip_id, knee_id = _SIDE_JOINTS[side]
    return _sub(frame.position(knee_id), frame.position(hip_id))


def hip_sagittal_angle(frame: SkeletonFrame, side: Side) -> float:
    """Hip flexion(+) / extension(-) in degrees.

    The thigh is projected onto the forward-up plane; the angle is
    measured from straight down (-up), positive toward forward.

    Raises
    ------
    AnalysisError
        Degenerate pelvis, or thigh projection under 1 cm
        ("indeterminate angle").
    """
    basis = pelvis_frame(frame)
    thigh = _thigh(frame, side)
    u = _dot(thigh, basis.up)
    f = _dot(thigh, basis.forward)
    if math.hypot(f, u) < DEGENERATE_EPS_M:
        raise AnalysisError("indeterminate angle: thigh normal to sagittal plane")
    return math.degrees(math.atan2(f, -u))


def hip_frontal_angle(frame: SkeletonFrame, side: Side) -> float:
    """Hip abduction in degrees, positive away from the midline for both legs.

    The thigh is projected onto the lateral-up plane; the sign is flipped
    for the left leg so abducting either leg reads positive.

    Raises
    ------
    AnalysisError
        Degenerate pelvis, or thigh projection under 1 cm
        ("indeterminate angle").
    """
    basis = pelvis_frame(frame)
    thigh = _thigh(frame, side)
    u = _dot(thigh, basis.up)
    l = _dot(thigh, basis.lateral)
    if math.hypot(l, u) < DEGENERATE_EPS_M:
        raise AnalysisError("indeterminate angle: thigh normal to frontal plane")
    lat = l if side is Side.RIGHT else -l
    return math.degrees(math.atan2(lat, -u))


def hip_angle(frame: SkeletonFrame, exercise: Exercise, side: Side) -> float:
    """The exercise's angle: abduction uses the frontal plane, flexion and
    squats the sagittal plane, extension the negated sagittal angle so the
    exercised direction always reads positive."""
    if exercise is Exercise.HIP_ABDUCTION:
        return hip_frontal_angle(frame, side)
    sagittal = hip_sagittal_angle(frame, side)
    return -sagittal if exercise is Exercise.HIP_EXTENSION else sagittal


def transform_frame(
    frame: SkeletonFrame, rotation: np.ndarray, translation: Vec3 = (0.0, 0.0, 0.0)
) -> SkeletonFrame:
    """Apply a rigid transform (3x3 rotation then translation) to every joint."""
    R = np.asarray(rotation, dtype=float)
    joints = []
    for j in frame.joints:
        p = R @ np.array(j.position, dtype=float)
        joints.append(
            Joint(
                (
                    float(p[0]) + translation[0],
                    float(p[1]) + translation[1],
                    float(p[2]) + translation[2],
                ),
                j.confidence,
            )
        )
    return SkeletonFrame(frame.user_id, frame.timestamp_ms, tuple(joints))


# ---------------------------------------------------------------------------
# angle time series
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AngleSeries:
    """A contiguous, uniformly sampled angle trace for one exercise bout.

    ``values`` is degrees at ``rate_hz``; ``t0_s`` is the absolute time of
    the first sample.  ``gap_before``/``gap_after`` record that tracking
    was lost adjacent to this segment, so repetitions touching the segment
    edge cannot be trusted.
    """

    exercise: Exercise
    side: Side
    t0_s: float
    rate_hz: float
    values: np.ndarray
    gap_before: bool = False
    gap_after: bool = False

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(len(self.values)) / self.rate_hz

    @property
    def duration_s(self) -> float:
        return (len(self.values) - 1) / self.rate_hz if len(self.values) else 0.0


def _sample_angles(
    frames: list[SkeletonFrame], exercise: Exercise, side: Side
) -> np.ndarray:
    needed = required_joints(side)
    out = np.full(len(frames), np.nan)
    for i, f in enumerate(frames):
        if any(f.joint(j).confidence is Confidence.NOT_TRACKED for j in needed):
            continue
        try:
            out[i] = hip_angle(f, exercise, side)
        except AnalysisError:
            continue  # geometrically indeterminate sample; treated as a dropout
    return out


def angle_series(
    frames,
    exercise: Exercise,
    side: Side,
    rate_hz: float = 30.0,
    filtered: bool = True,
) -> list[AngleSeries]:
    """Convert a raw frame stream into filtered angle segments.

    The stream is resampled to ``rate_hz``; samples with untracked joints
    or indeterminate geometry become dropouts.  Dropouts up to
    ``GAP_FILL_MAX_S`` bridged by valid data are filled linearly; longer
    ones split the trace.  Segments too short for the filter padding
    (under ``FILTER_PAD_S``) are discarded; survivors are low-pass
    filtered (``filtered=False`` skips that, for inspecting raw angles).

    Raises
    ------
    AnalysisError
        Less than 2 s of frames, more than half of all samples invalid,
        or no segment survives.
    """
    uniform = resample_uniform(frames, rate_hz)
    if uniform[-1].timestamp_ms - uniform[0].timestamp_ms < 2000:
        raise AnalysisError("insufficient data: need at least 2 s of frames")
    vals = _sample_angles(uniform, exercise, side)
    invalid = np.isnan(vals)
    if invalid.mean() > 0.5:
        raise AnalysisError(
            f"untrackable stream: {100.0 * invalid.mean():.0f}% of samples invalid"
        )

    max_gap = round(GAP_FILL_MAX_S * rate_hz)
    n = len(vals)
    # Bridge short interior dropouts; leave long or edge-touching runs as gaps.
    i = 0
    while i < n:
        if not invalid[i]:
            i += 1
            continue
        j = i
        while j < n and invalid[j]:
            j += 1
        if i > 0 and j < n and (j - i) <= max_gap:
            left, right = vals[i - 1], vals[j]
            for k in range(i, j):
                w = (k - i + 1) / (j - i + 1)
                vals[k] = (1.0 - w) * left + w * right
            invalid[i:j] = False
        i = j

    min_len = round(FILTER_PAD_S * rate_hz) + 1
    t0_ms = uniform[0].timestamp_ms
    segments: list[AngleSeries] = []
    i = 0
    while i < n:
        if invalid[i]:
            i += 1
            continue
        j = i
        while j < n and not invalid[j]:
            j += 1
        if j - i >= min_len:
            segment = vals[i:j].copy()
            if filtered:
                segment = lowpass_filter(segment, rate_hz)
            segments.append(
                AngleSeries(
                    exercise=exercise,
                    side=side,
                    t0_s=(t0_ms + round(i * 1000.0 / rate_hz)) / 1000.0,
                    rate_hz=rate_hz,
                    values=segment,
                    gap_before=i > 0,
                    gap_after=j < n,
                )
            )
        i = j
    if not segments:
        raise AnalysisError("no analyzable segments: every span too short to filter")
    return segments


def lowpass_filter(
    values: np.ndarray, rate_hz: float, cutoff_hz: float = FILTER_CUTOFF_HZ
) -> np.ndarray:
    """Zero-phase low-pass for angle traces.

    A 2nd-order Butterworth is applied forward and then backward (4th-order
    magnitude overall, no phase distortion).  The trace is extended by
    ``FILTER_PAD_S`` of reflected samples on each side before filtering so
    edge transients stay out of the analyzed span.

    Raises
    ------
    AnalysisError
        Trace shorter than the reflection padding.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-D trace")
    pad = round(FILTER_PAD_S * rate_hz)
    if len(x) <= pad:
        raise AnalysisError(
            f"too short to filter: {len(x)} samples, need more than {pad}"
        )
    if not 0 < cutoff_hz < rate_hz / 2:
        raise ValueError("cutoff must lie inside (0, rate/2)")
    b, a = butter(FILTER_ORDER, cutoff_hz / (rate_hz / 2.0))
    # Steady-state initial conditions: a constant trace passes through
    # unchanged (unit DC gain exactly), and edge transients never form.
    zi = lfilter_zi(b, a)
    padded = np.pad(x, pad, mode="reflect")
    fwd, _ = lfilter(b, a, padded, zi=zi * padded[0])
    back, _ = lfilter(b, a, fwd[::-1], zi=zi * fwd[-1])
    return back[::-1][pad:-pad]
