"""Repetition segmentation, exclusion rules, and per-set summaries.

Works on filtered angle traces (see :mod:`telephyt.kinematics`).  A
repetition is a rise from the resting baseline to a prominent peak and
back.  Onset is where the trace last crosses the rise threshold before
the peak (interpolated between samples, so the onset angle equals the
threshold exactly); the end is the first return crossing after it.

Velocity of one repetition is mean angular velocity over its rise::

    velocity = (theta_peak - theta_0) / (t_peak - t_0)      [deg/s]
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import find_peaks

from .errors import AnalysisError
from .kinematics import AngleSeries, Exercise, LimbStatus, Side

REASON_UNCLEAR = "unclear peak"
REASON_OUT_OF_VIEW = "out of view"

PROTOCOL_MIN_REPS = 8
PROTOCOL_MAX_REPS = 12

METRICS_CSV_HEADER = (
    "exercise,side,limb_status,n_detected,n_included,"
    "peak_mean_deg,peak_sd_deg,vel_mean_dps,vel_sd_dps"
)


@dataclass(frozen=True)
class SegmentationConfig:
    """Tunable thresholds; defaults are conservative for standing hip work."""

    baseline_quantile: float = 0.10
    rise_fraction: float = 0.10  # of (max - baseline), above baseline
    prominence_deg: float = 5.0
    min_duration_s: float = 0.5  # minimum spacing between distinct peaks
    min_excursion_deg: float = 10.0  # smaller movements are not counted

    def __post_init__(self):
        if min(self.baseline_quantile, self.rise_fraction, self.prominence_deg,
               self.min_duration_s, self.min_excursion_deg) <= 0:
            raise ValueError("all segmentation thresholds must be positive")
        if self.baseline_quantile >= 1 or self.rise_fraction >= 1:
            raise ValueError("quantile and rise fraction must be below 1")


@dataclass(frozen=True)
class Repetition:
    """One detected repetition; times are absolute seconds.

    ``t0_s < t_peak_s <= t_end_s`` and ``theta_peak_deg >= theta0_deg``
    hold for every repetition the segmenter emits.  ``starts_at_gap`` /
    ``ends_at_gap`` mark reps whose boundary ran into a tracking gap.
    """

    t0_s: float
    t_peak_s: float
    t_end_s: float
    theta0_deg: float
    theta_peak_deg: float
    starts_at_gap: bool = False
    ends_at_gap: bool = False
    excluded_reason: str | None = None

    @property
    def excursion_deg(self) -> float:
        return self.theta_peak_deg - self.theta0_deg

    @property
    def included(self) -> bool:
        return self.excluded_reason is None


def rep_velocity(rep: Repetition) -> float:
    """Mean angular velocity of the rise, in degrees per second.

    Exactly 0 when the peak equals the onset angle.

    Raises
    ------
    AnalysisError
        Peak time equals onset time ("zero-duration rise").
    """
    dt = rep.t_peak_s - rep.t0_s
    if dt <= 0:
        raise AnalysisError("zero-duration rise: peak time equals onset time")
    return (rep.theta_peak_deg - rep.theta0_deg) / dt


def _crossing_before(x: np.ndarray, peak: int, level: float) -> int | None:
    """Index k such that the trace crosses ``level`` upward in (k-1, k]."""
    k = peak
    while k > 0 and x[k - 1] > level:
        k -= 1
    return k if k > 0 else None


def _crossing_after(x: np.ndarray, peak: int, level: float) -> int | None:
    """Index k such that the trace crosses ``level`` downward in [k, k+1)."""
    k = peak
    last = len(x) - 1
    while k < last and x[k + 1] > level:
        k += 1
    return k if k < last else None


def segment_reps(
    series: AngleSeries, config: SegmentationConfig = SegmentationConfig()
) -> list[Repetition]:
    """Detect repetitions in one filtered angle segment.

    Baseline is the ``baseline_quantile`` of the trace; the rise threshold
    sits ``rise_fraction`` of the way from baseline to the trace maximum.
    Peaks come from prominence- and spacing-gated local maxima; candidates
    that never clear the threshold are dropped, and peaks sharing one
    threshold crossing count as a single repetition (the highest wins).
    A flat trace yields an empty list, not an error.
    """
    x = series.values
    if len(x) < 3:
        return []
    rate = series.rate_hz
    times = series.times
    baseline = float(np.quantile(x, config.baseline_quantile))
    top = float(x.max())
    if top <= baseline:
        return []
    level = baseline + config.rise_fraction * (top - baseline)

    peaks, _ = find_peaks(
        x,
        prominence=config.prominence_deg,
        distance=max(1, round(config.min_duration_s * rate)),
    )
    dt = 1.0 / rate
    candidates: list[tuple[int, Repetition]] = []
    for p in peaks:
        if x[p] < level:
            continue
        k0 = _crossing_before(x, p, level)
        if k0 is None:
            t0, theta0, start_clamped = times[0], float(x[0]), True
        else:
            w = (level - x[k0 - 1]) / (x[k0] - x[k0 - 1])
            t0, theta0, start_clamped = times[k0 - 1] + w * dt, level, False
        k1 = _crossing_after(x, p, level)
        if k1 is None:
            t_end, end_clamped = times[-1], True
        else:
            w = (x[k1] - level) / (x[k1] - x[k1 + 1])
            t_end, end_clamped = times[k1] + w * dt, False
        if theta0 >= x[p]:
            continue
        rep = Repetition(
            t0_s=float(t0),
            t_peak_s=float(times[p]),
            t_end_s=float(t_end),
            theta0_deg=theta0,
            theta_peak_deg=float(x[p]),
            starts_at_gap=start_clamped and series.gap_before,
            ends_at_gap=end_clamped and series.gap_after,
        )
        candidates.append((k0 if k0 is not None else -1, rep))

    merged: list[Repetition] = []
    last_key: int | None = None
    for key, rep in candidates:
        if merged and key == last_key:
            if rep.theta_peak_deg > merged[-1].theta_peak_deg:
                merged[-1] = replace(
                    rep,
                    t_end_s=merged[-1].t_end_s,
                    ends_at_gap=merged[-1].ends_at_gap,
                )
            continue
        merged.append(rep)
        last_key = key
    return merged


def apply_exclusions(
    reps: list[Repetition], config: SegmentationConfig = SegmentationConfig()
) -> list[Repetition]:
    """Mark repetitions that must not enter the summary statistics.

    * excursion under ``min_excursion_deg`` — "unclear peak";
    * a boundary that ran into a tracking gap — "out of view".
    """
    out = []
    for rep in reps:
        reason = None
        if rep.excursion_deg < config.min_excursion_deg:
            reason = REASON_UNCLEAR
        elif rep.starts_at_gap or rep.ends_at_gap:
            reason = REASON_OUT_OF_VIEW
        out.append(replace(rep, excluded_reason=reason))
    return out


@dataclass(frozen=True)
class ExerciseSummary:
    """Per-limb aggregate of one exercise set after exclusions."""

    exercise: Exercise
    side: Side
    limb_status: LimbStatus | None
    n_detected: int
    n_included: int
    peak_mean_deg: float
    peak_sd_deg: float
    vel_mean_dps: float
    vel_sd_dps: float
    flags: tuple[str, ...] = ()

    def csv_row(self) -> str:
        limb = self.limb_status.value if self.limb_status else ""
        return (
            f"{self.exercise.value},{self.side.value},{limb},"
            f"{self.n_detected},{self.n_included},"
            f"{self.peak_mean_deg:.4f},{self.peak_sd_deg:.4f},"
            f"{self.vel_mean_dps:.4f},{self.vel_sd_dps:.4f}"
        )


def _mean_sd(values: list[float]) -> tuple[float, float]:
    if len(values) == 1:
        return values[0], 0.0
    arr = np.asarray(values)
    return float(arr.mean()), float(arr.std(ddof=1))


def summarize(
    reps: list[Repetition],
    exercise: Exercise,
    side: Side,
    limb_status: LimbStatus | None = None,
) -> ExerciseSummary:
    """Aggregate included repetitions; sample (n-1) standard deviations.

    A single included rep reports its own value with SD 0 and an ``n=1``
    flag; a count outside the 8-12 protocol range raises a warning flag.

    Raises
    ------
    AnalysisError
        No included repetitions ("no valid repetitions").
    """
    included = [r for r in reps if r.included]
    if not included:
        raise AnalysisError("no valid repetitions")
    flags: list[str] = []
    if len(included) == 1:
        flags.append("n=1")
    elif not PROTOCOL_MIN_REPS <= len(included) <= PROTOCOL_MAX_REPS:
        flags.append(
            f"included repetitions outside protocol range "
            f"{PROTOCOL_MIN_REPS}-{PROTOCOL_MAX_REPS}"
        )
    peak_mean, peak_sd = _mean_sd([r.theta_peak_deg for r in included])
    vel_mean, vel_sd = _mean_sd([rep_velocity(r) for r in included])
    return ExerciseSummary(
        exercise=exercise,
        side=side,
        limb_status=limb_status,
        n_detected=len(reps),
        n_included=len(included),
        peak_mean_deg=peak_mean,
        peak_sd_deg=peak_sd,
        vel_mean_dps=vel_mean,
        vel_sd_dps=vel_sd,
        flags=tuple(flags),
    )
