"""Acceptance gate: eight release criteria, one visible PASS line each.

Every test here checks one shipping requirement end to end against an
independent oracle and a wall-clock budget, then prints a single
``PASS:`` line (written past pytest's capture so the line shows up in
plain ``pytest -v`` output).  A failed assertion in any test is the
corresponding FAIL signal.
"""

from __future__ import annotations

import asyncio
import itertools
import math
import time
from contextlib import AsyncExitStack

import numpy as np
import pytest
from websockets.asyncio.client import connect

from telephyt.analysis import analyze_frames
from telephyt.hub import Hub, HubConfig
from telephyt.kinematics import Exercise, LimbStatus, Side, hip_angle, lowpass_filter
from telephyt.protocol import (
    ErrorMsg,
    Feedback,
    Join,
    JoinAck,
    Role,
    decode_control,
    decode_frame,
    encode_control,
    encode_frame,
)
from telephyt.recording import read_recording
from telephyt.reps import Repetition, rep_velocity
from telephyt.skeleton import JOINT_COUNT, Confidence, Joint, JointId, SkeletonFrame
from telephyt.stats import paired_t, shapiro_wilk, wilcoxon_signed_rank
from telephyt.stats import compare_conditions
from telephyt.reps import ExerciseSummary
from telephyt.synth import BodyModel, ExerciseScript, generate, pose_frame


PASS_LINES: list[str] = []  # printed by conftest's terminal summary


def _pass(criterion: int, detail: str, elapsed: float, budget: float) -> None:
    PASS_LINES.append(
        f"PASS: [{criterion}/8] {detail} "
        f"(elapsed {elapsed:.2f}s, budget {budget:.0f}s)"
    )


def _script(**kwargs) -> ExerciseScript:
    defaults = dict(
        exercise=Exercise.HIP_ABDUCTION,
        side=Side.RIGHT,
        n_reps=12,
        amplitude_deg=40.0,
        period_s=4.0,
        rest_s=1.0,
    )
    defaults.update(kwargs)
    return ExerciseScript(**defaults)


# -- 1: velocity formula ---------------------------------------------------------


def test_criterion_1_velocity_formula():
    budget = 5.0
    t0 = time.perf_counter()

    # A noiseless ramp climbing 0 -> 45 deg over 1 s must measure 45 deg/s.
    script = _script(profile="linear_ramp", amplitude_deg=45.0,
                     period_s=2.0, n_reps=3)
    result = analyze_frames(generate(script), script.exercise, script.side)
    assert result.n_included == script.n_reps
    velocities = [rep_velocity(r) for r in result.reps]
    for v in velocities:
        assert v == pytest.approx(45.0, rel=0.05)

    # Degenerate rise: peak angle equal to onset angle is exactly zero.
    flat = Repetition(t0_s=0.0, t_peak_s=1.0, t_end_s=2.0,
                      theta0_deg=25.0, theta_peak_deg=25.0)
    assert rep_velocity(flat) == 0.0

    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    _pass(1, f"rep velocity: ramp measured {np.mean(velocities):.2f} deg/s "
             "(within 5% of 45), flat rep exactly 0", elapsed, budget)


# -- 2: end-to-end pipeline ------------------------------------------------------


def test_criterion_2_end_to_end_pipeline():
    budget = 10.0
    t0 = time.perf_counter()

    script = _script()  # 12 half-sine reps at 40 deg
    result = analyze_frames(generate(script), script.exercise, script.side)
    assert result.n_included == 12
    assert result.summary.peak_mean_deg == pytest.approx(40.0, abs=0.5)

    tiny = _script(amplitude_deg=4.0)
    small = analyze_frames(generate(tiny), tiny.exercise, tiny.side)
    assert small.n_included == 0
    assert small.summary is None

    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    _pass(2, "pipeline: 12/12 reps at "
             f"{result.summary.peak_mean_deg:.2f} deg; 4-deg bout fully "
             "excluded", elapsed, budget)


# -- 3: low-pass filter ----------------------------------------------------------


def _analytic_gain(f_hz: float, rate_hz: float = 30.0,
                   cutoff_hz: float = 4.0, order: int = 2) -> float:
    # Bilinear-transform Butterworth, forward+backward: the power response
    # of one pass becomes the amplitude response of the pair.
    ratio = math.tan(math.pi * f_hz / rate_hz) / math.tan(math.pi * cutoff_hz / rate_hz)
    return 1.0 / (1.0 + ratio ** (2 * order))


def _projected_amplitude(f_hz: float) -> float:
    rate, seconds, phase = 30.0, 12.0, 0.3
    t = np.arange(int(rate * seconds)) / rate
    y = lowpass_filter(np.sin(2 * np.pi * f_hz * t + phase), rate)
    central = slice(int(2 * rate), int(10 * rate))  # whole cycles, no edges
    tc, yc = t[central], y[central]
    a = 2.0 * np.mean(yc * np.sin(2 * np.pi * f_hz * tc))
    b = 2.0 * np.mean(yc * np.cos(2 * np.pi * f_hz * tc))
    return float(np.hypot(a, b))


def test_criterion_3_filter_response():
    budget = 1.0
    t0 = time.perf_counter()

    constant = np.full(150, 7.5)
    assert np.max(np.abs(lowpass_filter(constant, 30.0) - 7.5)) < 1e-9

    g1 = _projected_amplitude(1.0)
    g10 = _projected_amplitude(10.0)
    assert g1 >= 0.99
    assert g10 <= 0.05
    assert g1 == pytest.approx(_analytic_gain(1.0), abs=1e-2)
    assert g10 == pytest.approx(_analytic_gain(10.0), abs=1e-2)

    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    _pass(3, f"filter: DC exact, |H(1 Hz)|={g1:.4f}, |H(10 Hz)|={g10:.4f} "
             "vs analytical oracle", elapsed, budget)


# -- 4: kinematic invariance -----------------------------------------------------


_MIRROR_MAP = {
    jid: (JointId[jid.name[:-2] + ("_R" if jid.name.endswith("_L") else "_L")]
          if jid.name.endswith(("_L", "_R")) else jid)
    for jid in JointId
}


def _mirror(frame: SkeletonFrame) -> SkeletonFrame:
    joints = [None] * JOINT_COUNT
    for jid in JointId:
        x, y, z = frame.joints[jid].position
        joints[_MIRROR_MAP[jid]] = Joint((-x, y, z), frame.joints[jid].confidence)
    return SkeletonFrame(frame.user_id, frame.timestamp_ms, tuple(joints))


def _random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _rigidly_moved(frame: SkeletonFrame, rot: np.ndarray,
                   shift: np.ndarray) -> SkeletonFrame:
    joints = tuple(
        Joint(tuple((rot @ np.asarray(j.position) + shift).tolist()), j.confidence)
        for j in frame.joints
    )
    return SkeletonFrame(frame.user_id, frame.timestamp_ms, joints)


def test_criterion_4_kinematic_invariance():
    budget = 5.0
    t0 = time.perf_counter()

    rng = np.random.default_rng(7)
    exercises = list(Exercise)
    sides = (Side.LEFT, Side.RIGHT)
    worst_rigid = 0.0
    worst_mirror = 0.0
    for _ in range(1000):
        exercise = exercises[rng.integers(len(exercises))]
        side = sides[rng.integers(2)]
        body = BodyModel(
            pelvis_width=float(rng.uniform(0.12, 0.28)),
            trunk=float(rng.uniform(0.35, 0.6)),
            thigh=float(rng.uniform(0.3, 0.55)),
            shank=float(rng.uniform(0.3, 0.5)),
            root=tuple(rng.uniform(-2.0, 2.0, size=3).tolist()),
        )
        theta = float(rng.uniform(-30.0, 85.0))
        frame = pose_frame(exercise, side, theta, body)
        base = hip_angle(frame, exercise, side)

        moved = _rigidly_moved(frame, _random_rotation(rng),
                               rng.uniform(-5.0, 5.0, size=3))
        worst_rigid = max(worst_rigid,
                          abs(hip_angle(moved, exercise, side) - base))

        other = Side.LEFT if side is Side.RIGHT else Side.RIGHT
        worst_mirror = max(worst_mirror,
                           abs(hip_angle(_mirror(frame), exercise, other) - base))

    assert worst_rigid <= 1e-6
    assert worst_mirror <= 1e-9

    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    _pass(4, "kinematics: 1000 rigid transforms, worst drift "
             f"{worst_rigid:.2e} deg; worst mirror gap {worst_mirror:.2e} deg",
          elapsed, budget)


# -- 5: statistics vs oracles ------------------------------------------------------


def _oracle_avg_ranks(values) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _brute_force_wilcoxon(diffs) -> tuple[float, float]:
    nonzero = [d for d in diffs if d != 0]
    ranks = _oracle_avg_ranks([abs(d) for d in nonzero])
    w_plus = sum(r for d, r in zip(nonzero, ranks) if d > 0)
    w_minus = sum(r for d, r in zip(nonzero, ranks) if d < 0)
    w = min(w_plus, w_minus)
    total = sum(ranks)
    n = len(nonzero)
    lo = hi = 0
    for signs in itertools.product((0, 1), repeat=n):
        wp = sum(r for s, r in zip(signs, ranks) if s)
        if wp <= w + 1e-12:
            lo += 1
        if wp >= total - w - 1e-12:
            hi += 1
    return w, min(1.0, (lo + hi) / 2.0 ** n)


def _t2_closed_form_p(t: float) -> float:
    # Two-sided tail of Student's t with 2 degrees of freedom.
    return 1.0 - abs(t) / math.sqrt(2.0 + t * t)


SHAPIRO_GOLDENS = [
    # (sample, W, p) frozen from an independent reference implementation.
    ([4.8084, 4.6724, 4.7695, 0.5596, 0.1729, 2.9053, 2.8199, 6.2486,
      0.1586, 2.0931, 0.1409, 2.178, 3.4627, 0.7738, 2.4632, 0.3075,
      0.1832, 0.6304, 1.8024, 0.826],
     0.8869588557173776, 0.02365408924629983),
    ([9.6303, 8.6381, 12.4451, 9.6909, 9.1433, 9.2957, 11.0646, 10.7309,
      10.8255, 10.8616, 14.2833, 9.1872],
     0.8811691069310283, 0.09072304351641253),
    ([1.2, 3.4, 2.2], 0.9972527472527474, 0.8998502800372316),
    ([0.5, 1.0, 1.5, 2.0, 9.0], 0.7038833810746631, 0.010510846666075617),
    ([-1.6829, -0.3349, 0.1628, 0.5862, 0.7112, 0.7933, -0.3487, -0.4624],
     0.8957139892204541, 0.26421861351581155),
]


def test_criterion_5_statistics_oracles():
    budget = 30.0
    t0 = time.perf_counter()

    # Exact Wilcoxon equals full sign enumeration: 100 datasets, n = 3..12.
    rng = np.random.default_rng(55)
    checked = 0
    while checked < 100:
        n = 3 + checked % 10
        diffs = rng.integers(-5, 6, size=n).tolist()
        if all(d == 0 for d in diffs):
            continue
        result = wilcoxon_signed_rank([float(d) for d in diffs],
                                      [0.0] * n, method="exact")
        w_ref, p_ref = _brute_force_wilcoxon(diffs)
        assert result.statistic == pytest.approx(w_ref, abs=1e-12)
        assert result.p == pytest.approx(p_ref, abs=1e-12)
        checked += 1

    # Paired t on {1,2,3} vs zero: closed form t = 2*sqrt(3).
    t_res = paired_t([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    assert t_res.statistic == pytest.approx(2.0 * math.sqrt(3.0), abs=1e-9)
    assert abs(t_res.statistic - 3.4641) < 1e-4
    assert t_res.p == pytest.approx(_t2_closed_form_p(t_res.statistic), abs=1e-3)

    # Shapiro-Wilk against frozen goldens.
    for sample, w_gold, p_gold in SHAPIRO_GOLDENS:
        res = shapiro_wilk(sample)
        assert res.statistic == pytest.approx(w_gold, abs=1e-3)
        assert res.p == pytest.approx(p_gold, abs=1e-3)

    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    _pass(5, "stats: 100 Wilcoxon datasets equal brute force; t(1,2,3)="
             f"{t_res.statistic:.4f}; {len(SHAPIRO_GOLDENS)} Shapiro goldens "
             "within 1e-3", elapsed, budget)


# -- 6: wire protocol --------------------------------------------------------------


def test_criterion_6_protocol_round_trip_and_bandwidth():
    budget = 10.0
    t0 = time.perf_counter()

    rng = np.random.default_rng(99)
    n_frames = 10_000
    coords = rng.uniform(-5.0, 5.0, size=(n_frames, JOINT_COUNT, 3))
    coords = coords.astype(np.float32).astype(float)
    confidences = rng.integers(0, 3, size=(n_frames, JOINT_COUNT))
    uids = rng.integers(0, 2 ** 32, size=n_frames, dtype=np.uint64)
    stamps = rng.integers(0, 2 ** 63, size=n_frames, dtype=np.uint64)

    packet_sizes = set()
    for i in range(n_frames):
        joints = tuple(
            Joint(tuple(coords[i, j]), Confidence(int(confidences[i, j])))
            for j in range(JOINT_COUNT)
        )
        frame = SkeletonFrame(int(uids[i]), int(stamps[i]), joints)
        packet = encode_frame(frame)
        packet_sizes.add(len(packet))
        assert decode_frame(packet) == frame
    assert packet_sizes == {338}

    script = _script(n_reps=2, period_s=1.0, rest_s=0.0)
    one_second = [f for f in generate(script) if f.timestamp_ms < 1000]
    assert len(one_second) == 30
    bits_per_second = sum(len(encode_frame(f)) for f in one_second) * 8
    assert bits_per_second <= 125_000

    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    _pass(6, f"protocol: {n_frames} fuzzed frames round-trip, 338 bytes "
             f"each; 30 Hz stream {bits_per_second / 1000:.1f} kbit/s",
          elapsed, budget)


# -- 7: session hub ---------------------------------------------------------------


async def _paced_sender(ws, frames, send_clock, loop):
    t_start = loop.time()
    base = frames[0].timestamp_ms
    for frame in frames:
        delay = t_start + (frame.timestamp_ms - base) / 1000.0 - loop.time()
        if delay > 0:
            await asyncio.sleep(delay)
        send_clock[(frame.user_id, frame.timestamp_ms)] = loop.time()
        await ws.send(encode_frame(frame))
    await ws.send(encode_control(Feedback(0, f"done-{frames[0].user_id}")))


async def _drain_quietly(ws):
    try:
        async for _ in ws:
            pass
    except Exception:
        pass


def test_criterion_7_hub_relay(tmp_path):
    budget = 30.0
    t0 = time.perf_counter()
    seconds, rate = 10.0, 30.0

    async def main():
        hub = Hub(HubConfig(port=0, rec_dir=str(tmp_path)))
        await hub.start()
        url = f"ws://127.0.0.1:{hub.port}/ws"
        loop = asyncio.get_running_loop()
        send_clock: dict[tuple[int, int], float] = {}
        arrivals: list[tuple[int, int, float, bytes]] = []

        try:
            async with AsyncExitStack() as stack:
                pat = await stack.enter_async_context(
                    connect(url, max_queue=None))
                ther = await stack.enter_async_context(
                    connect(url, max_queue=None))
                obs = await stack.enter_async_context(
                    connect(url, max_queue=None))
                for ws, role, name in ((pat, Role.PATIENT, "pat"),
                                       (ther, Role.THERAPIST, "doc"),
                                       (obs, Role.OBSERVER, "watch")):
                    await ws.send(encode_control(Join("rehab", role, name)))
                    ack = decode_control(await ws.recv())
                    assert isinstance(ack, JoinAck)

                # A second therapist must be turned away.
                extra = await stack.enter_async_context(
                    connect(url, max_queue=None))
                await extra.send(encode_control(
                    Join("rehab", Role.THERAPIST, "doc2")))
                rejection = decode_control(await extra.recv())
                assert isinstance(rejection, ErrorMsg)
                assert rejection.code == "role occupied"

                n_each = int(seconds * rate)
                bout = _script(n_reps=3, period_s=3.0, rest_s=0.5)  # 11 s
                frames_a = generate(bout, rate_hz=rate)[:n_each]
                frames_b = [
                    SkeletonFrame(2, f.timestamp_ms, f.joints)
                    for f in generate(bout, rate_hz=rate)[:n_each]
                ]
                assert len(frames_a) == len(frames_b) == n_each

                async def observe():
                    done = 0
                    while done < 2:
                        msg = await asyncio.wait_for(obs.recv(), 10.0)
                        now = loop.time()
                        if isinstance(msg, (bytes, bytearray)):
                            frame = decode_frame(bytes(msg))
                            arrivals.append(
                                (frame.user_id, frame.timestamp_ms, now,
                                 bytes(msg)))
                        else:
                            decoded = decode_control(msg)
                            if (isinstance(decoded, Feedback)
                                    and decoded.text.startswith("done-")):
                                done += 1
                    # Frames and control travel on separate internal
                    # queues; allow any stragglers to land.
                    try:
                        while True:
                            msg = await asyncio.wait_for(obs.recv(), 0.3)
                            if isinstance(msg, (bytes, bytearray)):
                                frame = decode_frame(bytes(msg))
                                arrivals.append(
                                    (frame.user_id, frame.timestamp_ms,
                                     loop.time(), bytes(msg)))
                    except asyncio.TimeoutError:
                        pass

                drains = [asyncio.create_task(_drain_quietly(pat)),
                          asyncio.create_task(_drain_quietly(ther))]
                await asyncio.gather(
                    _paced_sender(pat, frames_a, send_clock, loop),
                    _paced_sender(ther, frames_b, send_clock, loop),
                    observe(),
                )
                for task in drains:
                    task.cancel()

                # Per-sender FIFO: the observer saw each sender's frames in
                # exactly the order (and bytes) they were sent.
                for uid, sent in ((1, frames_a), (2, frames_b)):
                    got = [pkt for fuid, _, _, pkt in arrivals if fuid == uid]
                    expected = [encode_frame(f) for f in sent]
                    assert len(got) == n_each
                    assert got == expected

                latencies = sorted(
                    (arrived - send_clock[(uid, ts)]) * 1000.0
                    for uid, ts, arrived, _ in arrivals
                )
                median_ms = latencies[len(latencies) // 2]
                assert median_ms <= 10.0

                path = await hub.stop_recording("rehab")
                recorded = read_recording(path)
                assert len(recorded.frames) == 2 * n_each
                return median_ms
        finally:
            await hub.close()

    median_ms = asyncio.run(main())
    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    _pass(7, f"hub: 2x{int(rate)} Hz x {int(seconds)} s relayed FIFO, "
             f"median latency {median_ms:.2f} ms; duplicate therapist "
             "rejected; recording complete", elapsed, budget)


# -- 8: condition comparison -------------------------------------------------------


def test_criterion_8_condition_comparison():
    budget = 5.0
    t0 = time.perf_counter()

    rng = np.random.default_rng(13)
    a_rows, b_rows = [], []
    for exercise in Exercise:
        for side in (Side.LEFT, Side.RIGHT):
            limb = LimbStatus.IMPAIRED if side is Side.RIGHT else LimbStatus.INTACT
            for _ in range(10):  # one row per study participant
                peak = float(rng.normal(40.0, 4.0))
                vel = float(rng.normal(50.0, 5.0))
                common = dict(exercise=exercise, side=side, limb_status=limb,
                              n_detected=10, n_included=10,
                              peak_sd_deg=1.0, vel_sd_dps=2.0)
                a_rows.append(ExerciseSummary(
                    peak_mean_deg=peak, vel_mean_dps=vel, **common))
                b_rows.append(ExerciseSummary(
                    peak_mean_deg=peak, vel_mean_dps=0.9 * vel, **common))

    report = compare_conditions(a_rows, b_rows)
    by_metric: dict[str, list] = {"velocity_dps": [], "magnitude_deg": []}
    for row in report.rows:
        by_metric[row.metric].append(row)
    assert len(by_metric["velocity_dps"]) == len(Exercise) * 2
    assert len(by_metric["magnitude_deg"]) == len(Exercise) * 2
    assert all(r.significant for r in by_metric["velocity_dps"])
    assert not any(r.significant for r in by_metric["magnitude_deg"])

    elapsed = time.perf_counter() - t0
    assert elapsed < budget
    _pass(8, "comparison: all 8 velocity rows significant, all 8 magnitude "
             "rows not, for a 10% velocity drop", elapsed, budget)
