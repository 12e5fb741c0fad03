"""Command-line entry point: one executable, six workflows.

``serve`` runs the relay hub; ``simulate`` and ``replay`` act as live
clients streaming synthetic or recorded motion into a hub; ``analyze``,
``stats``, and ``export`` are the offline pipeline.

Exit codes: 0 success, 1 usage/operational error, 2 data error.
Logs go to stderr; data goes to stdout or user-named files.
Every option can also be set via ``TELEPHYT_<COMMAND>_<OPTION>``
environment variables.
"""

from __future__ import annotations

import asyncio
import json
import logging
import signal
import sys
from pathlib import Path

import click
from websockets.asyncio.client import connect
from websockets.exceptions import ConnectionClosed

from .analysis import (
    analyze_recording,
    read_metrics_csv,
    render_angles_csv,
    render_metrics_csv,
    write_angles_csv,
)
from .errors import TelephytError
from .hub import Hub, HubConfig
from .kinematics import Exercise, Side
from .protocol import (
    ErrorMsg,
    Join,
    JoinAck,
    Leave,
    Role,
    decode_control,
    encode_control,
    encode_frame,
)
from .recording import read_recording
from .reps import SegmentationConfig
from .stats import compare_conditions
from .synth import ExerciseScript, generate, replay

log = logging.getLogger("telephyt")

_EXERCISES = [e.value for e in Exercise]
_SIDES = [s.value for s in Side]
_ROLES = [r.value for r in Role]


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _parse_listen(listen: str) -> tuple[str, int]:
    host, sep, port = listen.rpartition(":")
    if not sep or not port.isdigit():
        raise click.UsageError(f"--listen expects host:port, got {listen!r}")
    return host or "127.0.0.1", int(port)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug-level logs.")
def cli(verbose: bool) -> None:
    """Remote exercise streaming, recording, and motion analysis."""
    _setup_logging(verbose)


# -- serve ---------------------------------------------------------------------


@cli.command()
@click.option("--listen", default="127.0.0.1:8765", show_default=True,
              help="Address to bind, host:port.")
@click.option("--rec-dir", type=click.Path(file_okay=False), default=None,
              help="Record every room into this directory.")
@click.option("--max-rate", default=60.0, show_default=True,
              help="Per-sender frame rate cap (frames/s).")
@click.option("--idle-timeout", default=60.0, show_default=True,
              help="Seconds before an empty room is collected.")
@click.option("--static-dir", type=click.Path(file_okay=False), default=None,
              help="Serve a built web client from this directory at /.")
def serve(listen: str, rec_dir: str | None, max_rate: float,
          idle_timeout: float, static_dir: str | None) -> None:
    """Run the session hub until interrupted."""
    host, port = _parse_listen(listen)
    try:
        config = HubConfig(
            host=host,
            port=port,
            max_rate_hz=max_rate,
            rec_dir=rec_dir,
            idle_timeout_s=idle_timeout,
            static_dir=static_dir,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    asyncio.run(_serve_async(config))


async def _serve_async(config: HubConfig) -> None:
    hub = Hub(config)
    try:
        await hub.start()
    except OSError as exc:
        raise click.ClickException(
            f"cannot bind {config.host}:{config.port}: {exc}"
        ) from exc
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    try:
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
    except NotImplementedError:  # non-Unix event loops
        pass
    try:
        await stop.wait()
    except KeyboardInterrupt:
        pass
    finally:
        log.info("shutting down; finalizing recordings")
        await hub.close()


# -- live clients ----------------------------------------------------------------


async def _join_room(ws, room: str, role: Role, name: str) -> JoinAck:
    await ws.send(encode_control(Join(room, role, name)))
    while True:
        message = await ws.recv()
        if isinstance(message, (bytes, bytearray)):
            continue  # a frame can arrive before our ack; not for us yet
        msg = decode_control(message)
        if isinstance(msg, JoinAck):
            return msg
        if isinstance(msg, ErrorMsg):
            raise TelephytError(f"join rejected: {msg.code}: {msg.detail}")


async def _drain(ws) -> None:
    # Keep the read side moving so relayed traffic never backs up the socket.
    try:
        async for _ in ws:
            pass
    except ConnectionClosed:
        pass


@cli.command()
@click.option("--script", "script_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Exercise script (JSON).")
@click.option("--connect", "url", required=True, help="Hub URL, ws://host:port/ws.")
@click.option("--room", default="rehab", show_default=True)
@click.option("--role", type=click.Choice(_ROLES), default=Role.PATIENT.value,
              show_default=True)
@click.option("--name", default="sim", show_default=True)
@click.option("--rate", default=30.0, show_default=True, help="Frame rate (Hz).")
def simulate(script_path: str, url: str, room: str, role: str, name: str,
             rate: float) -> None:
    """Stream a scripted synthetic exercise session into a hub."""
    try:
        script = ExerciseScript.from_json(Path(script_path).read_text("utf-8"))
    except ValueError as exc:
        raise TelephytError(f"bad script: {exc}") from exc
    frames = generate(script, rate_hz=rate)
    asyncio.run(_stream_frames(url, room, Role(role), name, frames))


async def _stream_frames(url: str, room: str, role: Role, name: str,
                         frames) -> None:
    async with connect(url) as ws:
        ack = await _join_room(ws, room, role, name)
        log.info("joined room %s as user %d (%d peers)",
                 room, ack.user_id, len(ack.peers))
        reader = asyncio.create_task(_drain(ws))
        loop = asyncio.get_running_loop()
        t0 = loop.time()
        base = frames[0].timestamp_ms
        for frame in frames:
            delay = t0 + (frame.timestamp_ms - base) / 1000.0 - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            await ws.send(encode_frame(frame))
        log.info("streamed %d frames", len(frames))
        await ws.send(encode_control(Leave(ack.user_id)))
        reader.cancel()


@cli.command("replay")
@click.option("--rec", "rec_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Recording file to replay.")
@click.option("--connect", "url", required=True, help="Hub URL, ws://host:port/ws.")
@click.option("--room", default="rehab", show_default=True)
@click.option("--role", type=click.Choice(_ROLES), default=Role.PATIENT.value,
              show_default=True)
@click.option("--name", default="replay", show_default=True)
@click.option("--speed", default=1.0, show_default=True,
              help="Playback speed factor.")
@click.option("--user", "user_id", type=int, default=None,
              help="Replay only this user's frames.")
def replay_cmd(rec_path: str, url: str, room: str, role: str, name: str,
               speed: float, user_id: int | None) -> None:
    """Replay a recorded session into a hub like a live client."""
    rec = read_recording(rec_path)
    users = (user_id,) if user_id is not None else None
    asyncio.run(_replay_async(rec, url, room, Role(role), name, speed, users))


async def _replay_async(rec, url: str, room: str, role: Role, name: str,
                        speed: float, users) -> None:
    async with connect(url) as ws:
        ack = await _join_room(ws, room, role, name)
        reader = asyncio.create_task(_drain(ws))
        sent = await replay(rec, ws.send, speed=speed, users=users)
        log.info("replayed %d frames at speed %.2f", sent, speed)
        await ws.send(encode_control(Leave(ack.user_id)))
        reader.cancel()


# -- offline pipeline -------------------------------------------------------------


def _load_config(path: str | None) -> SegmentationConfig:
    if path is None:
        return SegmentationConfig()
    try:
        raw = json.loads(Path(path).read_text("utf-8"))
        return SegmentationConfig(**raw)
    except (OSError, TypeError, ValueError) as exc:
        raise click.UsageError(f"bad segmentation config: {exc}") from exc


def _rep_table(reps) -> str:
    lines = ["idx  t0_s    t_peak_s  t_end_s  theta0  theta_peak  included  reason"]
    for i, r in enumerate(reps):
        reason = r.excluded_reason or ""
        lines.append(
            f"{i:<4d} {r.t0_s:<7.2f} {r.t_peak_s:<9.2f} {r.t_end_s:<8.2f} "
            f"{r.theta0_deg:<7.2f} {r.theta_peak_deg:<11.2f} "
            f"{'yes' if r.included else 'no':<9s} {reason}"
        )
    return "\n".join(lines)


@cli.command()
@click.option("--rec", "rec_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--exercise", required=True, type=click.Choice(_EXERCISES))
@click.option("--side", required=True, type=click.Choice(_SIDES))
@click.option("--surgical-side", type=click.Choice(_SIDES), default=None,
              help="Marks each side impaired or intact in the output.")
@click.option("--user", "user_id", type=int, default=None,
              help="Analyze this user's stream (default: the patient).")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Segmentation thresholds (JSON).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Write metrics.csv and angles.csv here.")
def analyze(rec_path: str, exercise: str, side: str, surgical_side: str | None,
            user_id: int | None, config_path: str | None,
            out_dir: str | None) -> None:
    """Quantify one exercise in a recording: reps, peaks, velocities."""
    rec = read_recording(rec_path)
    result = analyze_recording(
        rec,
        Exercise(exercise),
        Side(side),
        config=_load_config(config_path),
        user_id=user_id,
        surgical_side=Side(surgical_side) if surgical_side else None,
    )
    click.echo(_rep_table(result.reps))
    if result.summary is None:
        raise TelephytError(result.summary_error or "no valid repetitions")
    s = result.summary
    click.echo(
        f"\n{s.exercise.value} {s.side.value}"
        + (f" ({s.limb_status.value})" if s.limb_status else "")
        + f": {s.n_included}/{s.n_detected} repetitions included"
    )
    click.echo(f"peak angle: {s.peak_mean_deg:.2f} +/- {s.peak_sd_deg:.2f} deg")
    click.echo(f"velocity:   {s.vel_mean_dps:.2f} +/- {s.vel_sd_dps:.2f} deg/s")
    for flag in s.flags:
        click.echo(f"warning: {flag}")
        log.warning("summary flag: %s", flag)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(
            render_metrics_csv([s]), encoding="utf-8"
        )
        write_angles_csv(result.series, out / "angles.csv")
        log.info("wrote %s and %s", out / "metrics.csv", out / "angles.csv")


@cli.command()
@click.argument("metrics_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("metrics_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--csv", "as_csv", is_flag=True, help="Emit CSV instead of a table.")
def stats(metrics_a: str, metrics_b: str, alpha: float, as_csv: bool) -> None:
    """Compare two conditions from their exported metrics CSVs."""
    a = read_metrics_csv(metrics_a)
    b = read_metrics_csv(metrics_b)
    report = compare_conditions(a, b, alpha=alpha)
    click.echo(report.render_csv() if as_csv else report.render_text(), nl=False)


@cli.command()
@click.option("--rec", "rec_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "angles"]),
              default="angles", show_default=True,
              help="csv: summary metrics; angles: per-sample angle series.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--exercise", type=click.Choice(_EXERCISES), default=None,
              help="Limit to one exercise (default: all).")
@click.option("--side", type=click.Choice(_SIDES), default=None,
              help="Limit to one side (default: both).")
@click.option("--user", "user_id", type=int, default=None)
@click.option("--surgical-side", type=click.Choice(_SIDES), default=None)
def export(rec_path: str, fmt: str, out_dir: str, exercise: str | None,
           side: str | None, user_id: int | None,
           surgical_side: str | None) -> None:
    """Export a recording's angle series or metrics as CSV files."""
    rec = read_recording(rec_path)
    exercises = [Exercise(exercise)] if exercise else list(Exercise)
    sides = [Side(side)] if side else list(Side)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    summaries = []
    for ex in exercises:
        for sd in sides:
            try:
                result = analyze_recording(
                    rec, ex, sd, user_id=user_id,
                    surgical_side=Side(surgical_side) if surgical_side else None,
                )
            except TelephytError as exc:
                log.info("skipping %s/%s: %s", ex.value, sd.value, exc)
                continue
            if fmt == "angles":
                path = out / f"angles_{ex.value}_{sd.value}.csv"
                path.write_text(render_angles_csv(result.series), "utf-8")
                written.append(path)
            elif result.summary is not None:
                summaries.append(result.summary)
            else:
                log.info("skipping %s/%s: %s", ex.value, sd.value,
                         result.summary_error)
    if fmt == "csv" and summaries:
        path = out / "metrics.csv"
        path.write_text(render_metrics_csv(summaries), "utf-8")
        written.append(path)
    if not written:
        raise TelephytError("no analyzable data in recording")
    for path in written:
        click.echo(str(path))


# -- entry point ----------------------------------------------------------------


def run(argv: list[str] | None = None) -> int:
    """Run the CLI and map failures onto the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False,
                 auto_envvar_prefix="TELEPHYT")
        return 0
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except TelephytError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except KeyboardInterrupt:
        return 0  # graceful stop (serve handles its own shutdown)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
