/**
 * Scene state store: the single source of rendered truth.
 *
 * Every numeric quantity on screen originates from server messages; the
 * store swaps in complete revisions monotonically and never exposes stale
 * data as current.
 */

import type { AnchorState, Pose, ServerMessage, SolveInfo, StateUpdatePayload } from "./protocol.js";

export interface ModelDescription {
  name: string;
  dof: number;
  joints: string[];
  bodies: string[];
  polytopes: { id: string; body: string; vertices: number[][] }[];
  environment: { name: string; vertices: number[][] }[];
}

export interface SceneState {
  sessionId: string | null;
  revision: number;
  model: ModelDescription | null;
  puppetQ: number[];
  controllerQ: number[];
  anchors: AnchorState[];
  bodyPoses: Record<string, Pose>;
  regionMode: string;
  region: { mode: string; vertices: [number, number][] } | null;
  solve: SolveInfo | null;
  saturation: number[] | null;
  forcePolytopes: Record<string, [number, number, number][]>;
  undoDepth: number;
  keyframes: number;
  lastError: string | null;
  staleRevisionsDropped: number;
}

export function emptyScene(): SceneState {
  return {
    sessionId: null,
    revision: 0,
    model: null,
    puppetQ: [],
    controllerQ: [],
    anchors: [],
    bodyPoses: {},
    regionMode: "flat",
    region: null,
    solve: null,
    saturation: null,
    forcePolytopes: {},
    undoDepth: 0,
    keyframes: 0,
    lastError: null,
    staleRevisionsDropped: 0,
  };
}

/** The undo button is enabled exactly when the server reports undo depth > 0. */
export function undoEnabled(scene: SceneState): boolean {
  return scene.undoDepth > 0;
}

/**
 * Fold one server message into the scene. State updates with a revision at
 * or below the current one are dropped whole (monotonic swap).
 */
export function applyServerMessage(scene: SceneState, msg: ServerMessage): SceneState {
  switch (msg.type) {
    case "welcome": {
      const p = msg.payload as Record<string, unknown>;
      scene.sessionId = String(p["session"]);
      scene.model = p["model"] as ModelDescription;
      return scene;
    }
    case "state_update": {
      const revision = msg.revision ?? 0;
      if (revision <= scene.revision) {
        scene.staleRevisionsDropped += 1;
        return scene;
      }
      const p = (msg.payload ?? {}) as StateUpdatePayload;
      scene.revision = revision;
      if (p.puppet_q) scene.puppetQ = p.puppet_q;
      if (p.controller_q) scene.controllerQ = p.controller_q;
      if (p.anchors) scene.anchors = p.anchors;
      if (p.body_poses) scene.bodyPoses = p.body_poses;
      if (p.region_mode) scene.regionMode = p.region_mode;
      if ("region" in p) scene.region = p.region ?? null;
      if (p.solve) scene.solve = p.solve;
      // Overlay payloads are replaced only when present; a missing payload
      // hides the overlay rather than showing stale geometry.
      scene.saturation = p.saturation ?? null;
      if (p.force_polytopes) scene.forcePolytopes = p.force_polytopes;
      if (typeof p.undo_depth === "number") scene.undoDepth = p.undo_depth;
      if (typeof p.keyframes === "number") scene.keyframes = p.keyframes;
      scene.lastError = null;
      return scene;
    }
    case "error": {
      scene.lastError = String((msg.payload ?? {})["message"] ?? "unknown error");
      return scene;
    }
    default:
      return scene;
  }
}
