"""Offline analysis pipeline: recording -> angle series -> reps -> summary.

Ties the per-stage modules together for the CLI and for batch use:
resample to a uniform grid, compute the hip angle per frame, low-pass
filter, segment repetitions, apply exclusion rules, and summarize.

When a recording carries manual start/end event labels, those labeled
windows take precedence over automated segmentation (the automated
segmenter is skipped and a log line says so).  "note" labels are
ignored here — they are conversation annotations, not rep marks.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AnalysisError
from .kinematics import (
    AngleSeries,
    Exercise,
    LimbStatus,
    Side,
    angle_series,
    resolve_limb_status,
)
from .protocol import Role
from .recording import EventLabel, Recording, read_recording
from .reps import (
    METRICS_CSV_HEADER,
    ExerciseSummary,
    Repetition,
    SegmentationConfig,
    apply_exclusions,
    segment_reps,
    summarize,
)
from .skeleton import SkeletonFrame

log = logging.getLogger(__name__)

ANGLES_CSV_HEADER = "t_s,theta_deg"


@dataclass(frozen=True)
class AnalysisResult:
    """Everything one (exercise, side) pass produced.

    ``summary`` is None when no repetition survived exclusion; the
    reason is then in ``summary_error``.
    """

    exercise: Exercise
    side: Side
    series: tuple[AngleSeries, ...]
    reps: tuple[Repetition, ...]
    summary: ExerciseSummary | None
    summary_error: str | None = None

    @property
    def n_detected(self) -> int:
        return len(self.reps)

    @property
    def n_included(self) -> int:
        return sum(1 for r in self.reps if r.included)


def _labeled_windows(labels) -> list[tuple[float, float]]:
    """Pair start/end labels into (t_start_s, t_end_s) windows."""
    windows: list[tuple[float, float]] = []
    open_start: EventLabel | None = None
    for lab in sorted(labels, key=lambda l: l.timestamp_ms):
        if lab.kind == "start":
            if open_start is not None:
                log.warning("label at %d ms: start without matching end; dropped",
                            open_start.timestamp_ms)
            open_start = lab
        elif lab.kind == "end":
            if open_start is None:
                log.warning("label at %d ms: end without matching start; dropped",
                            lab.timestamp_ms)
                continue
            if lab.timestamp_ms > open_start.timestamp_ms:
                windows.append(
                    (open_start.timestamp_ms / 1000.0, lab.timestamp_ms / 1000.0)
                )
            else:
                log.warning("label window at %d ms has no duration; dropped",
                            lab.timestamp_ms)
            open_start = None
    if open_start is not None:
        log.warning("label at %d ms: start without matching end; dropped",
                    open_start.timestamp_ms)
    return windows


def reps_from_labels(
    series_list: list[AngleSeries], windows: list[tuple[float, float]]
) -> list[Repetition]:
    """Build repetitions from manually labeled start/end windows.

    The peak is the largest filtered sample strictly inside the window;
    windows that contain no rise (or fall outside every tracked span)
    are dropped with a log line.
    """
    reps: list[Repetition] = []
    for t_start, t_end in windows:
        placed = False
        for ser in series_list:
            times = ser.times
            seg_start, seg_end = float(times[0]), float(times[-1])
            lo = max(t_start, seg_start)
            hi = min(t_end, seg_end)
            if hi <= lo:
                continue
            theta0 = float(np.interp(lo, times, ser.values))
            inside = (times > lo) & (times <= hi)
            if not inside.any():
                continue
            idx = np.flatnonzero(inside)
            k = idx[int(np.argmax(ser.values[idx]))]
            theta_peak = float(ser.values[k])
            if theta_peak < theta0:
                log.warning("labeled window %.2f-%.2f s: no rise inside; dropped",
                            t_start, t_end)
                placed = True
                break
            reps.append(
                Repetition(
                    t0_s=lo,
                    t_peak_s=float(times[k]),
                    t_end_s=hi,
                    theta0_deg=theta0,
                    theta_peak_deg=theta_peak,
                    starts_at_gap=lo > t_start and ser.gap_before,
                    ends_at_gap=hi < t_end and ser.gap_after,
                )
            )
            placed = True
            break
        if not placed:
            log.warning("labeled window %.2f-%.2f s: outside tracked data; dropped",
                        t_start, t_end)
    return reps


def analyze_frames(
    frames: list[SkeletonFrame],
    exercise: Exercise,
    side: Side,
    *,
    config: SegmentationConfig = SegmentationConfig(),
    rate_hz: float = 30.0,
    surgical_side: Side | None = None,
    labels=(),
) -> AnalysisResult:
    """Run the full pipeline over one user's frames.

    Raises
    ------
    AnalysisError
        When the stream itself is unusable (too short, untrackable);
        zero *included* reps is reported in the result, not raised.
    """
    series_list = angle_series(frames, exercise, side, rate_hz=rate_hz)
    windows = _labeled_windows(labels)
    if windows:
        log.info("using %d manual label window(s); automated segmentation skipped",
                 len(windows))
        reps = reps_from_labels(series_list, windows)
    else:
        reps = [r for ser in series_list for r in segment_reps(ser, config)]
    reps = apply_exclusions(reps, config)
    limb = resolve_limb_status(side, surgical_side) if surgical_side else None
    try:
        summary = summarize(reps, exercise, side, limb_status=limb)
        err = None
    except AnalysisError as exc:
        summary, err = None, str(exc)
    return AnalysisResult(
        exercise=exercise,
        side=side,
        series=tuple(series_list),
        reps=tuple(reps),
        summary=summary,
        summary_error=err,
    )


def _pick_user(rec: Recording, user_id: int | None) -> int:
    if user_id is not None:
        if user_id not in rec.user_ids:
            raise AnalysisError(f"no frames for user {user_id} in recording")
        return user_id
    uids = rec.user_ids
    if len(uids) == 1:
        return uids[0]
    patients = [
        p.user_id for p in rec.header.participants
        if p.role is Role.PATIENT and p.user_id in uids
    ]
    if len(patients) == 1:
        return patients[0]
    raise AnalysisError(
        "ambiguous recording: multiple users with frames; specify a user id"
    )


def analyze_recording(
    rec: Recording,
    exercise: Exercise,
    side: Side,
    *,
    config: SegmentationConfig = SegmentationConfig(),
    user_id: int | None = None,
    surgical_side: Side | None = None,
) -> AnalysisResult:
    """Analyze one user's stream out of a recording.

    The user defaults to the only user with frames, else the recorded
    patient.  Manual start/end labels in the recording override
    automated segmentation.
    """
    uid = _pick_user(rec, user_id)
    frames = rec.frames_for(uid)
    return analyze_frames(
        frames,
        exercise,
        side,
        config=config,
        rate_hz=rec.header.rate_hint_hz,
        surgical_side=surgical_side,
        labels=rec.labels,
    )


def analyze_file(
    path: str | Path,
    exercise: Exercise,
    side: Side,
    **kwargs,
) -> AnalysisResult:
    return analyze_recording(read_recording(path), exercise, side, **kwargs)


# -- CSV rendering -----------------------------------------------------------


def render_metrics_csv(summaries) -> str:
    lines = [METRICS_CSV_HEADER]
    lines += [s.csv_row() for s in summaries]
    return "\n".join(lines) + "\n"


def write_metrics_csv(summaries, path: str | Path) -> None:
    Path(path).write_text(render_metrics_csv(summaries), encoding="utf-8")


def read_metrics_csv(path: str | Path) -> list[ExerciseSummary]:
    """Parse a metrics CSV back into summaries (for the stats command)."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    expected = METRICS_CSV_HEADER.split(",")
    if reader.fieldnames != expected:
        raise AnalysisError(
            f"bad metrics CSV header: expected {','.join(expected)}"
        )
    out = []
    for i, row in enumerate(reader, start=2):
        try:
            out.append(
                ExerciseSummary(
                    exercise=Exercise(row["exercise"]),
                    side=Side(row["side"]),
                    limb_status=(
                        LimbStatus(row["limb_status"]) if row["limb_status"] else None
                    ),
                    n_detected=int(row["n_detected"]),
                    n_included=int(row["n_included"]),
                    peak_mean_deg=float(row["peak_mean_deg"]),
                    peak_sd_deg=float(row["peak_sd_deg"]),
                    vel_mean_dps=float(row["vel_mean_dps"]),
                    vel_sd_dps=float(row["vel_sd_dps"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise AnalysisError(f"bad metrics CSV row {i}: {exc}") from exc
    return out


def render_angles_csv(series_list) -> str:
    """Angle series as ``t_s,theta_deg`` rows, 6 decimal places."""
    lines = [ANGLES_CSV_HEADER]
    for ser in series_list:
        for t, v in zip(ser.times, ser.values):
            lines.append(f"{t:.6f},{v:.6f}")
    return "\n".join(lines) + "\n"


def write_angles_csv(series_list, path: str | Path) -> None:
    Path(path).write_text(render_angles_csv(series_list), encoding="utf-8")
