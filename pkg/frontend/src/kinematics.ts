/** Live joint-angle computation for the trace overlay.
 *
 * This duplicates the angle definitions of the analysis pipeline, which is
 * the single source of truth; parity is enforced by the shared test vectors
 * under `vectors/angle-vectors.json`, generated from the pipeline and
 * checked against both implementations.
 */

import { JointId, SkeletonFrame, Vec3 } from "./skeleton.js";

export type Exercise = "hip_abduction" | "hip_extension" | "hip_flexion" | "squat";
export type Side = "left" | "right";

export const EXERCISES: readonly Exercise[] = [
  "hip_abduction",
  "hip_extension",
  "hip_flexion",
  "squat",
];

/** Below this, a direction is geometrically meaningless (meters). */
export const DEGENERATE_EPS_M = 0.01;

/** Joints that must be tracked for the angle on `side` to exist. */
export function requiredJoints(side: Side): readonly JointId[] {
  const pelvis = [JointId.HipL, JointId.HipR, JointId.SpineBase, JointId.SpineMid];
  return side === "left"
    ? [...pelvis, JointId.HipL, JointId.KneeL]
    : [...pelvis, JointId.HipR, JointId.KneeR];
}

/** Thrown when the pose leaves an angle undefined (degenerate pelvis or
 * thigh normal to the measurement plane). */
export class KinematicsError extends Error {}

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function norm(a: Vec3): number {
  return Math.sqrt(dot(a, a));
}

function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function position(frame: SkeletonFrame, jid: JointId): Vec3 {
  return frame.joints[jid]!.position;
}

/** Orthonormal body-fixed basis anchored at the pelvis. */
export interface PelvisFrame {
  readonly origin: Vec3; // SpineBase position
  readonly lateral: Vec3; // right-pointing
  readonly up: Vec3;
  readonly forward: Vec3; // lateral x up
}

/** Build the anatomical basis for one sample.
 *
 * `lateral` points from the left hip to the right hip; `up` is the spine
 * direction orthonormalized against it; `forward` completes the
 * right-handed triad (`lateral x up`).
 */
export function pelvisFrame(frame: SkeletonFrame): PelvisFrame {
  const hipL = position(frame, JointId.HipL);
  const hipR = position(frame, JointId.HipR);
  const across = sub(hipR, hipL);
  const width = norm(across);
  if (width < DEGENERATE_EPS_M) {
    throw new KinematicsError("degenerate pelvis: hip joints coincide");
  }
  const lateral = scale(across, 1.0 / width);
  const trunk = sub(position(frame, JointId.SpineMid), position(frame, JointId.SpineBase));
  const residual = sub(trunk, scale(lateral, dot(trunk, lateral)));
  const height = norm(residual);
  if (height < DEGENERATE_EPS_M) {
    throw new KinematicsError("degenerate pelvis: trunk collinear with hip axis");
  }
  const up = scale(residual, 1.0 / height);
  return {
    origin: position(frame, JointId.SpineBase),
    lateral,
    up,
    forward: cross(lateral, up),
  };
}

function thigh(frame: SkeletonFrame, side: Side): Vec3 {
  const hip = side === "left" ? JointId.HipL : JointId.HipR;
  const knee = side === "left" ? JointId.KneeL : JointId.KneeR;
  return sub(position(frame, knee), position(frame, hip));
}

const DEG_PER_RAD = 180 / Math.PI;

/** Hip flexion(+) / extension(-) in degrees: the thigh projected onto the
 * forward-up plane, measured from straight down (-up), positive toward
 * forward. */
export function hipSagittalAngle(frame: SkeletonFrame, side: Side): number {
  const basis = pelvisFrame(frame);
  const t = thigh(frame, side);
  const u = dot(t, basis.up);
  const f = dot(t, basis.forward);
  if (Math.hypot(f, u) < DEGENERATE_EPS_M) {
    throw new KinematicsError("indeterminate angle: thigh normal to sagittal plane");
  }
  return Math.atan2(f, -u) * DEG_PER_RAD;
}

/** Hip abduction in degrees, positive away from the midline for both legs:
 * the thigh projected onto the lateral-up plane, sign flipped for the left
 * leg so abducting either leg reads positive. */
export function hipFrontalAngle(frame: SkeletonFrame, side: Side): number {
  const basis = pelvisFrame(frame);
  const t = thigh(frame, side);
  const u = dot(t, basis.up);
  const l = dot(t, basis.lateral);
  if (Math.hypot(l, u) < DEGENERATE_EPS_M) {
    throw new KinematicsError("indeterminate angle: thigh normal to frontal plane");
  }
  const lat = side === "right" ? l : -l;
  return Math.atan2(lat, -u) * DEG_PER_RAD;
}

/** The exercise's angle: abduction uses the frontal plane, flexion and
 * squats the sagittal plane, extension the negated sagittal angle so the
 * exercised direction always reads positive. */
export function hipAngle(frame: SkeletonFrame, exercise: Exercise, side: Side): number {
  if (exercise === "hip_abduction") return hipFrontalAngle(frame, side);
  const sagittal = hipSagittalAngle(frame, side);
  return exercise === "hip_extension" ? -sagittal : sagittal;
}
