/** Core skeleton types shared by the decoder, the renderer, and the
 * angle computation.
 *
 * The joint set is the 25-joint full-body skeleton delivered by markerless
 * infrared depth cameras.  Positions are meters in the camera frame
 * (x right, y up, z toward the camera, right-handed).  Ordinals are fixed:
 * they define the wire layout and must never be reordered.
 */

export enum JointId {
  SpineBase = 0,
  SpineMid = 1,
  SpineShoulder = 2,
  Neck = 3,
  Head = 4,
  ShoulderL = 5,
  ShoulderR = 6,
  ElbowL = 7,
  ElbowR = 8,
  WristL = 9,
  WristR = 10,
  HandL = 11,
  HandR = 12,
  HandTipL = 13,
  HandTipR = 14,
  ThumbL = 15,
  ThumbR = 16,
  HipL = 17,
  HipR = 18,
  KneeL = 19,
  KneeR = 20,
  AnkleL = 21,
  AnkleR = 22,
  FootL = 23,
  FootR = 24,
}

export const JOINT_COUNT = 25;

export enum Confidence {
  NotTracked = 0,
  Inferred = 1,
  Tracked = 2,
}

export type Vec3 = readonly [number, number, number];

export interface Joint {
  readonly position: Vec3;
  readonly confidence: Confidence;
}

export interface SkeletonFrame {
  readonly userId: number;
  readonly timestampMs: number;
  /** Indexed by JointId ordinal; always exactly 25 entries. */
  readonly joints: readonly Joint[];
}

/** Bone segment list for stick-figure rendering, (parent, child) pairs. */
export const SKELETON_BONES: ReadonlyArray<readonly [JointId, JointId]> = [
  [JointId.SpineBase, JointId.SpineMid],
  [JointId.SpineMid, JointId.SpineShoulder],
  [JointId.SpineShoulder, JointId.Neck],
  [JointId.Neck, JointId.Head],
  [JointId.SpineShoulder, JointId.ShoulderL],
  [JointId.ShoulderL, JointId.ElbowL],
  [JointId.ElbowL, JointId.WristL],
  [JointId.WristL, JointId.HandL],
  [JointId.HandL, JointId.HandTipL],
  [JointId.WristL, JointId.ThumbL],
  [JointId.SpineShoulder, JointId.ShoulderR],
  [JointId.ShoulderR, JointId.ElbowR],
  [JointId.ElbowR, JointId.WristR],
  [JointId.WristR, JointId.HandR],
  [JointId.HandR, JointId.HandTipR],
  [JointId.WristR, JointId.ThumbR],
  [JointId.SpineBase, JointId.HipL],
  [JointId.HipL, JointId.KneeL],
  [JointId.KneeL, JointId.AnkleL],
  [JointId.AnkleL, JointId.FootL],
  [JointId.SpineBase, JointId.HipR],
  [JointId.HipR, JointId.KneeR],
  [JointId.KneeR, JointId.AnkleR],
  [JointId.AnkleR, JointId.FootR],
];
