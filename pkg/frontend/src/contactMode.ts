/**
 * Two-phase contact creation.
 *
 * Phase one projects the pointer to the nearest robot surface (server
 * round-trip) and previews the surface normal; a click fixes the robot-side
 * point. Phase two projects onto the environment; a click emits a
 * contact-anchor creation whose orientation target keeps the two surfaces
 * tangent, with yaw about the contact normal left free.
 */

import type { SequencedClient, ServerMessage } from "./protocol.js";

export type ContactPhase = "idle" | "pick-robot" | "pick-environment";

export interface SurfacePreview {
  point: [number, number, number];
  normal: [number, number, number];
  name: string;
}

/** Tangency mask: angular x/y constrained, yaw free, position fully held. */
export const TANGENT_AXES = [true, true, false, true, true, true];

export class ContactModeFlow {
  phase: ContactPhase = "idle";
  preview: SurfacePreview | null = null;
  private robotPick: { body: string; point: number[]; normal: number[] } | null = null;
  private pendingProjection = false;

  constructor(private client: SequencedClient) {
    client.onServerMessage((msg) => this.onServer(msg));
  }

  begin(): void {
    this.phase = "pick-robot";
    this.preview = null;
    this.robotPick = null;
  }

  /** Pointer moved: ask the server where the surface is. */
  pointerSample(point: [number, number, number]): void {
    if (this.phase === "idle" || this.pendingProjection) return;
    const target = this.phase === "pick-robot" ? "robot" : "environment";
    this.pendingProjection = true;
    this.client.send("project_point", { point, target });
  }

  private onServer(msg: ServerMessage): void {
    if (msg.type !== "projection") {
      if (msg.type === "error" && this.pendingProjection) this.pendingProjection = false;
      return;
    }
    this.pendingProjection = false;
    const p = msg.payload as Record<string, unknown>;
    this.preview = {
      point: p["point"] as [number, number, number],
      normal: p["normal"] as [number, number, number],
      name: String(p["name"]),
    };
  }

  /** Click: fix the current preview; phase two's click creates the anchor. */
  click(): boolean {
    if (this.phase === "idle" || this.preview === null) return false;
    if (this.phase === "pick-robot") {
      this.robotPick = {
        body: this.preview.name,
        point: [...this.preview.point],
        normal: [...this.preview.normal],
      };
      this.phase = "pick-environment";
      this.preview = null;
      return false;
    }
    // pick-environment: emit the contact creation
    const pick = this.robotPick;
    if (!pick) return false;
    this.client.send("anchor_edit", {
      op: "create_contact",
      body: pick.body,
      body_point: pick.point,
      robot_normal: pick.normal,
      env_point: this.preview.point,
      env_normal: this.preview.normal,
      axes: TANGENT_AXES,
    });
    this.cancel();
    return true;
  }

  /** Escape cancels the whole flow without sending anything. */
  cancel(): void {
    this.phase = "idle";
    this.preview = null;
    this.robotPick = null;
    this.pendingProjection = false;
  }
}
