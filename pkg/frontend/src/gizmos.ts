/**
 * Anchor gizmo descriptors: what to draw, renderer-agnostic.
 *
 * Spatial anchors show a ring per rotation axis and an arrow per translation
 * axis with the actively constrained ones highlighted; CoM anchors are
 * arrows only (no orientation setpoint); joint anchors are a single arrow
 * whose vertical drag maps to the joint position. Contact anchors render
 * smaller and blue.
 */

import type { AnchorState } from "./protocol.js";

export interface GizmoElement {
  kind: "ring" | "arrow";
  axis: "x" | "y" | "z";
  highlighted: boolean;
}

export interface GizmoDescriptor {
  anchorId: string;
  elements: GizmoElement[];
  color: string;
  scale: number;
  dragMapping: "pose" | "point" | "vertical-to-joint";
}

const AXES: Array<"x" | "y" | "z"> = ["x", "y", "z"];

export const CONTACT_COLOR = "#3a7bd5"; // contact anchors are smaller and blue
export const DEFAULT_COLOR = "#e8e4d8";

export function anchorGizmo(anchor: AnchorState): GizmoDescriptor | null {
  switch (anchor.kind) {
    case "spatial": {
      const elements: GizmoElement[] = [];
      AXES.forEach((axis, i) => {
        elements.push({ kind: "ring", axis, highlighted: Boolean(anchor.axes[i]) });
      });
      AXES.forEach((axis, i) => {
        elements.push({ kind: "arrow", axis, highlighted: Boolean(anchor.axes[3 + i]) });
      });
      return {
        anchorId: anchor.id,
        elements,
        color: anchor.contact ? CONTACT_COLOR : DEFAULT_COLOR,
        scale: anchor.contact ? 0.6 : 1.0,
        dragMapping: "pose",
      };
    }
    case "com": {
      // Arrows only: there is no orientation setpoint on a CoM anchor.
      const elements: GizmoElement[] = AXES.map((axis, i) => ({
        kind: "arrow",
        axis,
        highlighted: Boolean(anchor.axes[i]),
      }));
      return {
        anchorId: anchor.id,
        elements,
        color: DEFAULT_COLOR,
        scale: 1.0,
        dragMapping: "point",
      };
    }
    case "joint":
      return {
        anchorId: anchor.id,
        elements: [{ kind: "arrow", axis: "z", highlighted: true }],
        color: DEFAULT_COLOR,
        scale: 0.8,
        dragMapping: "vertical-to-joint",
      };
    default:
      return null; // unknown kinds are hidden, diagnostics go to the console
  }
}

/** Vertical pointer motion (m) to a joint-position delta (rad), 1 rad/m. */
export const JOINT_DRAG_SCALE = 1.0;

export function jointDragTarget(current: number, verticalDelta: number): number {
  return current + JOINT_DRAG_SCALE * verticalDelta;
}

export const SATURATION_RED_THRESHOLD = 0.9;

/**
 * Green-to-red tint by static-torque saturation; fully red at ratio >= 0.9
 * (a joint at risk of torque saturation).
 */
export function saturationColor(ratio: number): string {
  const t = Math.min(Math.max(ratio / SATURATION_RED_THRESHOLD, 0), 1);
  const red = Math.round(40 + 215 * t);
  const green = Math.round(200 - 160 * t);
  return `rgb(${red},${green},40)`;
}

export function isSaturationRed(ratio: number): boolean {
  return ratio >= SATURATION_RED_THRESHOLD;
}
