/** Browser entry point: join form, render loop, camera controls, and the
 * side panel (joint-angle trace, metric table, feedback).
 *
 * All protocol and state logic lives in `session.ts`; all drawing logic in
 * `scene.ts` and `trace.ts`.  This file only wires them to the DOM.
 */

import { EXERCISES, Exercise, hipAngle, KinematicsError, requiredJoints, Side } from "./kinematics.js";
import { Role } from "./protocol.js";
import { Camera, defaultCamera, renderScene } from "./scene.js";
import { ClientSession } from "./session.js";
import { Confidence, SkeletonFrame } from "./skeleton.js";
import { LIMB_COLORS, TraceOverlay } from "./trace.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function defaultHubUrl(): string {
  const scheme = location.protocol === "https:" ? "wss:" : "ws:";
  const host = location.host !== "" ? location.host : "127.0.0.1:8765";
  return `${scheme}//${host}/ws`;
}

/** ws://host/ws -> http://host, for the recording-control endpoints. */
function httpBase(wsUrl: string): string {
  const url = new URL(wsUrl);
  url.protocol = url.protocol === "wss:" ? "https:" : "http:";
  url.pathname = "";
  url.search = "";
  return url.toString().replace(/\/$/, "");
}

class App {
  private session: ClientSession | null = null;
  private readonly camera: Camera = defaultCamera();
  private readonly trace = new TraceOverlay();
  private traceNowMs = 0;
  private lastTraceTs = new Map<Side, number>();

  private readonly sceneCanvas = el<HTMLCanvasElement>("scene-canvas");
  private readonly traceCanvas = el<HTMLCanvasElement>("trace-canvas");
  private readonly sceneCtx = this.sceneCanvas.getContext("2d")!;
  private readonly traceCtx = this.traceCanvas.getContext("2d")!;

  private frameCount = 0;
  private fpsWindowStart = performance.now();

  start(): void {
    this.wireJoinForm();
    this.wireCameraControls();
    this.wireSidePanel();
    requestAnimationFrame((t) => this.tick(t));
  }

  private wireJoinForm(): void {
    const form = el<HTMLFormElement>("join-form");
    el<HTMLInputElement>("join-url").value = defaultHubUrl();
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const url = el<HTMLInputElement>("join-url").value.trim();
      const room = el<HTMLInputElement>("join-room").value.trim();
      const role = el<HTMLSelectElement>("join-role").value as Role;
      const name = el<HTMLInputElement>("join-name").value.trim() || role;
      if (url === "" || room === "") return;
      this.join(url, room, role, name);
    });
  }

  private join(url: string, room: string, role: Role, name: string): void {
    this.session?.close();
    this.trace.clear();
    this.lastTraceTs.clear();
    this.session = new ClientSession({
      url,
      room,
      role,
      name,
      onChange: () => this.refreshPanels(),
    });
    this.session.connect();
    el<HTMLElement>("join-overlay").classList.add("hidden");
    el<HTMLElement>("feedback-form").classList.toggle("hidden", role !== "therapist");
    el<HTMLButtonElement>("record-start").onclick = () => this.recordingRequest(url, room, "start");
    el<HTMLButtonElement>("record-stop").onclick = () => this.recordingRequest(url, room, "stop");
  }

  private recordingRequest(wsUrl: string, room: string, action: "start" | "stop"): void {
    const target = `${httpBase(wsUrl)}/rooms/${encodeURIComponent(room)}/recording/${action}`;
    fetch(target)
      .then(async (resp) => {
        const body = (await resp.text()).trim();
        this.toastLocal(resp.ok ? body : `recording ${action} failed: ${body}`);
      })
      .catch((exc) => this.toastLocal(`recording ${action} failed: ${exc}`));
  }

  private toastLocal(text: string): void {
    const session = this.session;
    if (session !== null) {
      session.toasts.push({ text, atMs: Date.now() });
      this.refreshPanels();
    }
  }

  private wireCameraControls(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.sceneCanvas.addEventListener("mousedown", (event) => {
      dragging = true;
      lastX = event.clientX;
      lastY = event.clientY;
    });
    window.addEventListener("mouseup", () => {
      dragging = false;
    });
    window.addEventListener("mousemove", (event) => {
      if (!dragging) return;
      this.camera.orbitDeg = (this.camera.orbitDeg + (event.clientX - lastX) * 0.4) % 360;
      this.camera.elevationDeg = Math.max(
        -15,
        Math.min(80, this.camera.elevationDeg + (event.clientY - lastY) * 0.3),
      );
      lastX = event.clientX;
      lastY = event.clientY;
    });
    this.sceneCanvas.addEventListener(
      "wheel",
      (event) => {
        event.preventDefault();
        const factor = event.deltaY > 0 ? 0.92 : 1.087;
        this.camera.zoom = Math.max(0.2, Math.min(4, this.camera.zoom * factor));
      },
      { passive: false },
    );
  }

  private wireSidePanel(): void {
    const select = el<HTMLSelectElement>("exercise");
    for (const exercise of EXERCISES) {
      const option = document.createElement("option");
      option.value = exercise;
      option.textContent = exercise.replace("_", " ");
      select.appendChild(option);
    }
    select.addEventListener("change", () => {
      this.trace.clear();
      this.lastTraceTs.clear();
    });
    el<HTMLSelectElement>("impaired-side").addEventListener("change", () => this.refreshPanels());
    el<HTMLFormElement>("feedback-form").addEventListener("submit", (event) => {
      event.preventDefault();
      const input = el<HTMLInputElement>("feedback-text");
      if (this.session?.sendFeedback(input.value) === true) input.value = "";
    });
  }

  /** Feed the angle trace from the patient avatar's newest frame. */
  private updateTrace(): void {
    const session = this.session;
    if (session === null) return;
    const patient =
      session.avatars().find((a) => a.role === "patient") ?? session.avatars()[0];
    if (patient === undefined) return;
    const exercise = el<HTMLSelectElement>("exercise").value as Exercise;
    for (const side of ["left", "right"] as Side[]) {
      const frame = patient.frame;
      if (frame.timestampMs <= (this.lastTraceTs.get(side) ?? -1)) continue;
      if (!this.jointsTracked(frame, side)) continue;
      let angle: number;
      try {
        angle = hipAngle(frame, exercise, side);
      } catch (exc) {
        if (exc instanceof KinematicsError) continue; // degenerate pose: skip sample
        throw exc;
      }
      this.lastTraceTs.set(side, frame.timestampMs);
      this.trace.push(side, frame.timestampMs, angle);
      this.traceNowMs = Math.max(this.traceNowMs, frame.timestampMs);
    }
  }

  private jointsTracked(frame: SkeletonFrame, side: Side): boolean {
    for (const joint of requiredJoints(side)) {
      if (frame.joints[joint]!.confidence === Confidence.NotTracked) return false;
    }
    return true;
  }

  private tick(timeMs: number): void {
    this.frameCount += 1;
    if (timeMs - this.fpsWindowStart >= 1000) {
      const fps = (this.frameCount * 1000) / (timeMs - this.fpsWindowStart);
      el<HTMLElement>("fps").textContent = `${fps.toFixed(0)} fps`;
      this.frameCount = 0;
      this.fpsWindowStart = timeMs;
    }
    const session = this.session;
    if (session !== null) {
      session.prune(Date.now());
      this.updateTrace();
      renderScene(this.sceneCtx, {
        width: this.sceneCanvas.width,
        height: this.sceneCanvas.height,
        camera: this.camera,
        avatars: session.avatars(),
      });
      this.renderTrace();
    }
    requestAnimationFrame((t) => this.tick(t));
  }

  private renderTrace(): void {
    const ctx = this.traceCtx;
    ctx.fillStyle = "#14161c";
    ctx.fillRect(0, 0, this.traceCanvas.width, this.traceCanvas.height);
    this.trace.render(ctx, 0, 0, this.traceCanvas.width, this.traceCanvas.height, this.traceNowMs);
  }

  /** Refresh the DOM panels; canvas redraws happen in the frame loop. */
  private refreshPanels(): void {
    const session = this.session;
    if (session === null) return;

    const status = el<HTMLElement>("status");
    status.textContent = `${session.state} · ${session.framesReceived} frames`;
    status.dataset["state"] = session.state;

    const banner = el<HTMLElement>("banner");
    banner.textContent = session.banner ?? "";
    banner.classList.toggle("hidden", session.banner === null);

    const impaired = el<HTMLSelectElement>("impaired-side").value as Side;
    const rows: string[] = [];
    for (const side of ["left", "right"] as Side[]) {
      const metric = session.metrics.get(side);
      if (metric === undefined) continue;
      const label = side === impaired ? `${side} (impaired)` : `${side} (intact)`;
      rows.push(
        `<tr><td>${label}</td><td>${metric.exercise}</td><td>${metric.rep_count}</td>` +
          `<td>${metric.last_peak_deg.toFixed(1)}°</td>` +
          `<td>${metric.last_velocity_dps.toFixed(1)}°/s</td></tr>`,
      );
    }
    el<HTMLElement>("metrics-body").innerHTML = rows.join("");

    el<HTMLElement>("feedback-log").innerHTML = session.feedbackLog
      .slice(-8)
      .map((entry) => `<div class="cue"><b>${escapeHtml(entry.fromName)}</b> ${escapeHtml(entry.text)}</div>`)
      .join("");

    el<HTMLElement>("toasts").innerHTML = session.toasts
      .map((toast) => `<div class="toast">${escapeHtml(toast.text)}</div>`)
      .join("");

    const legendLeft = el<HTMLElement>("legend-left");
    const legendRight = el<HTMLElement>("legend-right");
    legendLeft.style.color = LIMB_COLORS["left"] ?? "";
    legendRight.style.color = LIMB_COLORS["right"] ?? "";
  }
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

new App().start();
