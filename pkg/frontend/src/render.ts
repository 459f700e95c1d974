/**
 * Dependency-free orthographic wireframe renderer.
 *
 * Geometry comes exclusively from the scene store: local polytope vertices
 * from the welcome message transformed by server-sent body poses, the region
 * polygon from feasibility payloads, anchors from the anchor list. The
 * camera math is pure so tests can run without a DOM.
 */

import { anchorGizmo, saturationColor } from "./gizmos.js";
import type { Pose } from "./protocol.js";
import type { SceneState } from "./scene.js";

export interface Camera {
  yaw: number; // radians about world z
  pitch: number; // radians
  zoom: number; // pixels per meter
  center: [number, number, number];
}

export function defaultCamera(): Camera {
  return { yaw: Math.PI / 6, pitch: Math.PI / 8, zoom: 220, center: [0, 0, 0.6] };
}

/** World point to screen (x right, y down), orthographic. */
export function projectPoint(
  cam: Camera,
  p: [number, number, number],
  width: number,
  height: number,
): [number, number] {
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  const x = p[0] - cam.center[0];
  const y = p[1] - cam.center[1];
  const z = p[2] - cam.center[2];
  // Yaw about z, then pitch the view axis down.
  const vx = cy * x + sy * y;
  const vy = -sy * x + cy * y;
  const vz = z;
  const sx = vy;
  const sz = cp * vz - sp * vx;
  return [width / 2 + cam.zoom * sx, height / 2 - cam.zoom * sz];
}

export function applyPose(pose: Pose, v: number[]): [number, number, number] {
  const r = pose.rotation;
  const t = pose.position;
  return [
    r[0][0] * (v[0] ?? 0) + r[0][1] * (v[1] ?? 0) + r[0][2] * (v[2] ?? 0) + t[0],
    r[1][0] * (v[0] ?? 0) + r[1][1] * (v[1] ?? 0) + r[1][2] * (v[2] ?? 0) + t[1],
    r[2][0] * (v[0] ?? 0) + r[2][1] * (v[1] ?? 0) + r[2][2] * (v[2] ?? 0) + t[2],
  ];
}

/** Edges of a vertex cloud's bounding wireframe (cheap hull stand-in). */
export function cloudEdges(vertices: number[][]): Array<[number[], number[]]> {
  const edges: Array<[number[], number[]]> = [];
  const n = vertices.length;
  for (let i = 0; i < n; i++) {
    let best = -1;
    let second = -1;
    let bestD = Infinity;
    let secondD = Infinity;
    for (let j = 0; j < n; j++) {
      if (i === j) continue;
      const a = vertices[i]!;
      const b = vertices[j]!;
      const d =
        ((a[0] ?? 0) - (b[0] ?? 0)) ** 2 +
        ((a[1] ?? 0) - (b[1] ?? 0)) ** 2 +
        ((a[2] ?? 0) - (b[2] ?? 0)) ** 2;
      if (d < bestD) {
        second = best;
        secondD = bestD;
        best = j;
        bestD = d;
      } else if (d < secondD) {
        second = j;
        secondD = d;
      }
    }
    if (best > i) edges.push([vertices[i]!, vertices[best]!]);
    if (second > i) edges.push([vertices[i]!, vertices[second]!]);
  }
  return edges;
}

export interface CanvasLike {
  width: number;
  height: number;
  getContext(kind: "2d"): CanvasRenderingContext2D | null;
}

export function renderScene(canvas: CanvasLike, scene: SceneState, cam: Camera): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#14161a";
  ctx.fillRect(0, 0, width, height);
  const proj = (p: [number, number, number]) => projectPoint(cam, p, width, height);

  // environment wireframes
  ctx.strokeStyle = "#47515c";
  ctx.lineWidth = 1;
  for (const poly of scene.model?.environment ?? []) {
    for (const [a, b] of cloudEdges(poly.vertices)) {
      line(ctx, proj(a as [number, number, number]), proj(b as [number, number, number]));
    }
  }

  // robot polytopes at server-sent body poses
  for (const poly of scene.model?.polytopes ?? []) {
    const pose = scene.bodyPoses[poly.body];
    if (!pose) continue;
    ctx.strokeStyle = "#9fb4c7";
    for (const [a, b] of cloudEdges(poly.vertices)) {
      line(ctx, proj(applyPose(pose, a)), proj(applyPose(pose, b)));
    }
  }

  // support region on the ground plane
  if (scene.region && scene.region.vertices.length >= 2) {
    ctx.strokeStyle = "#58c470";
    ctx.beginPath();
    scene.region.vertices.forEach(([x, y], i) => {
      const [sx, sy] = proj([x, y, 0.001]);
      if (i === 0) ctx.moveTo(sx, sy);
      else ctx.lineTo(sx, sy);
    });
    ctx.closePath();
    ctx.stroke();
  }

  // anchor gizmos as tinted markers (rings/arrows as glyph counts)
  for (const anchor of scene.anchors) {
    const gizmo = anchorGizmo(anchor);
    if (!gizmo) continue;
    const pos = anchorWorldPosition(scene, anchor.id);
    if (!pos) continue;
    const [sx, sy] = proj(pos);
    ctx.strokeStyle = gizmo.color;
    ctx.beginPath();
    ctx.arc(sx, sy, 6 * gizmo.scale, 0, 2 * Math.PI);
    ctx.stroke();
  }

  // saturation tint readout, joint order
  if (scene.saturation && scene.model) {
    scene.saturation.forEach((ratio, i) => {
      ctx.fillStyle = saturationColor(ratio);
      ctx.fillRect(8 + i * 10, height - 16, 8, 8);
    });
  }
}

function anchorWorldPosition(scene: SceneState, anchorId: string): [number, number, number] | null {
  const anchor = scene.anchors.find((a) => a.id === anchorId);
  if (!anchor) return null;
  if (anchor.kind === "spatial" && anchor.target && typeof anchor.target === "object") {
    const t = anchor.target as Pose;
    if (Array.isArray(t.position)) return t.position;
  }
  if (anchor.kind === "com" && Array.isArray(anchor.target)) {
    const t = anchor.target as number[];
    return [t[0] ?? 0, t[1] ?? 0, t[2] ?? 0];
  }
  if (anchor.kind === "joint" && anchor.joint) {
    const pose = anchor.body ? scene.bodyPoses[anchor.body] : undefined;
    if (pose) return pose.position;
  }
  return null;
}

function line(ctx: CanvasRenderingContext2D, a: [number, number], b: [number, number]): void {
  ctx.beginPath();
  ctx.moveTo(a[0], a[1]);
  ctx.lineTo(b[0], b[1]);
  ctx.stroke();
}
