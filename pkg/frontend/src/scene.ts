/** Shared 3D scene: stick-figure avatars on a ground plane, drawn through
 * a perspective projection onto a 2D canvas.
 *
 * Rendering is pure with respect to its inputs: the same scene state
 * always produces the same sequence of drawing commands, so tests can
 * record them against a fake context.  All time- or input-dependent
 * behavior (camera motion, frame arrival) lives in the state, never here.
 */

import { Role } from "./protocol.js";
import { Confidence, SKELETON_BONES, SkeletonFrame, Vec3 } from "./skeleton.js";

/** The subset of CanvasRenderingContext2D the renderer draws through. */
export interface Ctx2D {
  lineWidth: number;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  globalAlpha: number;
  font: string;
  textAlign: CanvasTextAlign;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  save(): void;
  restore(): void;
}

export interface Camera {
  /** Azimuth around the target, degrees; 0 looks along the world -z axis. */
  orbitDeg: number;
  /** Elevation above the horizontal, degrees. */
  elevationDeg: number;
  /** Camera distance from the target, meters. */
  distance: number;
  /** Focal-length multiplier; larger zooms in. */
  zoom: number;
  target: Vec3;
}

export function defaultCamera(): Camera {
  return { orbitDeg: 0, elevationDeg: 12, distance: 4.5, zoom: 0.9, target: [0, 1, 2.5] };
}

export interface AvatarState {
  readonly userId: number;
  readonly frame: SkeletonFrame;
  readonly role?: Role;
  readonly name?: string;
}

export interface SceneState {
  readonly width: number;
  readonly height: number;
  readonly camera: Camera;
  readonly avatars: readonly AvatarState[];
}

const BACKGROUND = "#14161c";
const GRID_COLOR = "#2a2e38";
const NEAR_M = 0.1;
/** Lateral spacing between avatars so peers render side by side. */
export const AVATAR_SPACING_M = 1.2;

const ROLE_COLORS: Readonly<Record<Role, string>> = {
  patient: "#3fb6b2",
  therapist: "#e4742c",
  observer: "#8a8fa3",
};
const UNKNOWN_ROLE_COLOR = "#8a8fa3";

interface Projected {
  readonly x: number;
  readonly y: number;
  readonly depth: number;
}

/** Perspective-project one world point; null when behind the near plane. */
export function project(camera: Camera, width: number, height: number, p: Vec3): Projected | null {
  const yaw = (camera.orbitDeg * Math.PI) / 180;
  const pitch = (camera.elevationDeg * Math.PI) / 180;
  const dx = p[0] - camera.target[0];
  const dy = p[1] - camera.target[1];
  const dz = p[2] - camera.target[2];
  // Yaw about the vertical axis, then pitch about the horizontal axis.
  const cy = Math.cos(yaw);
  const sy = Math.sin(yaw);
  const x1 = cy * dx - sy * dz;
  const z1 = sy * dx + cy * dz;
  const cp = Math.cos(pitch);
  const sp = Math.sin(pitch);
  const y2 = cp * dy - sp * z1;
  const z2 = sp * dy + cp * z1;
  const depth = camera.distance - z2;
  if (depth < NEAR_M) return null;
  const focal = camera.zoom * Math.min(width, height);
  return {
    x: width / 2 + (focal * x1) / depth,
    y: height / 2 - (focal * y2) / depth,
    depth,
  };
}

function strokeSegment(ctx: Ctx2D, a: Projected | null, b: Projected | null): void {
  if (a === null || b === null) return;
  ctx.beginPath();
  ctx.moveTo(a.x, a.y);
  ctx.lineTo(b.x, b.y);
  ctx.stroke();
}

function drawGround(ctx: Ctx2D, state: SceneState): void {
  const { camera, width, height } = state;
  const [tx, , tz] = camera.target;
  ctx.strokeStyle = GRID_COLOR;
  ctx.lineWidth = 1;
  const extent = 3;
  for (let k = -extent; k <= extent; k++) {
    strokeSegment(
      ctx,
      project(camera, width, height, [tx + k, 0, tz - extent]),
      project(camera, width, height, [tx + k, 0, tz + extent]),
    );
    strokeSegment(
      ctx,
      project(camera, width, height, [tx - extent, 0, tz + k]),
      project(camera, width, height, [tx + extent, 0, tz + k]),
    );
  }
}

function offsetPosition(p: Vec3, offsetX: number): Vec3 {
  return [p[0] + offsetX, p[1], p[2]];
}

function drawAvatar(ctx: Ctx2D, state: SceneState, avatar: AvatarState, offsetX: number): void {
  const { camera, width, height } = state;
  const color = avatar.role !== undefined ? ROLE_COLORS[avatar.role] : UNKNOWN_ROLE_COLOR;
  const joints = avatar.frame.joints;
  const projected: (Projected | null)[] = joints.map((joint) =>
    project(camera, width, height, offsetPosition(joint.position, offsetX)),
  );

  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  for (const [a, b] of SKELETON_BONES) {
    const ja = joints[a]!;
    const jb = joints[b]!;
    if (ja.confidence === Confidence.NotTracked || jb.confidence === Confidence.NotTracked) {
      continue;
    }
    ctx.globalAlpha =
      ja.confidence === Confidence.Inferred || jb.confidence === Confidence.Inferred ? 0.45 : 1;
    strokeSegment(ctx, projected[a]!, projected[b]!);
  }

  ctx.fillStyle = color;
  for (let i = 0; i < joints.length; i++) {
    const joint = joints[i]!;
    if (joint.confidence === Confidence.NotTracked) continue;
    const point = projected[i];
    if (point === null || point === undefined) continue;
    ctx.globalAlpha = joint.confidence === Confidence.Inferred ? 0.45 : 1;
    ctx.beginPath();
    ctx.arc(point.x, point.y, 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.globalAlpha = 1;

  if (avatar.name !== undefined && avatar.name !== "") {
    const head = projected[4]; // JointId.Head
    if (head !== null && head !== undefined) {
      ctx.font = "12px sans-serif";
      ctx.textAlign = "center";
      ctx.fillText(avatar.name, head.x, head.y - 12);
    }
  }
}

/** Draw the whole scene.  Avatars are laid out side by side in user-id
 * order so two peers never overlap even when both streams are rooted at
 * the same spot. */
export function renderScene(ctx: Ctx2D, state: SceneState): void {
  ctx.save();
  ctx.globalAlpha = 1;
  ctx.fillStyle = BACKGROUND;
  ctx.fillRect(0, 0, state.width, state.height);
  drawGround(ctx, state);
  const ordered = [...state.avatars].sort((a, b) => a.userId - b.userId);
  const n = ordered.length;
  ordered.forEach((avatar, i) => {
    const offsetX = (i - (n - 1) / 2) * AVATAR_SPACING_M;
    drawAvatar(ctx, state, avatar, offsetX);
  });
  ctx.restore();
}
