/**
 * Session protocol v1: message types, light validation, and a sequenced
 * client that can only emit schema-valid, strictly ordered messages.
 *
 * Mirrors ../protocol_schema.json; the test suite cross-checks the enums
 * here against that file so the two cannot drift apart.
 */

export const PROTOCOL_VERSION = 1;

export const CLIENT_TYPES = [
  "hello",
  "anchor_edit",
  "drag_pose",
  "drag_end",
  "solve_tick",
  "record_keyframe",
  "undo",
  "snap_anchors",
  "snap_nominal",
  "clear_non_persistent",
  "set_region_mode",
  "configure_solver",
  "query_feasibility",
  "project_point",
  "export_script",
  "import_script",
  "heartbeat",
] as const;

export const SERVER_TYPES = [
  "welcome",
  "state_update",
  "error",
  "projection",
  "script_data",
  "ack",
  "heartbeat",
] as const;

export type ClientType = (typeof CLIENT_TYPES)[number];
export type ServerType = (typeof SERVER_TYPES)[number];

/** Message kinds that carry a sequence number (everything stateful). */
export const SEQUENCED_TYPES: readonly ClientType[] = CLIENT_TYPES.filter(
  (t) => t !== "hello" && t !== "heartbeat",
);

export interface Pose {
  position: [number, number, number];
  rotation: [[number, number, number], [number, number, number], [number, number, number]];
}

export type AnchorKind = "spatial" | "com" | "joint";
export type Tier = "low" | "medium" | "high";
export type FollowMode = "none" | "track-controller" | "snap-once";

export interface AnchorState {
  id: string;
  kind: AnchorKind;
  body?: string;
  joint?: string;
  target: unknown;
  offset?: Pose;
  axes: boolean[];
  tier: Tier;
  contact: boolean;
  persistent: boolean;
  follow: FollowMode;
  mirroring: boolean;
}

export interface SolveInfo {
  status: string;
  iterations: number;
  residuals: Record<string, number>;
}

export interface StateUpdatePayload {
  puppet_q?: number[];
  controller_q?: number[];
  anchors?: AnchorState[];
  body_poses?: Record<string, Pose>;
  region_mode?: "flat" | "multi-contact" | "off";
  region?: { mode: string; vertices: [number, number][] } | null;
  solve?: SolveInfo;
  saturation?: number[];
  force_polytopes?: Record<string, [number, number, number][]>;
  undo_depth?: number;
  keyframes?: number;
}

export interface ServerMessage {
  type: ServerType;
  revision?: number;
  ack?: number;
  payload?: Record<string, unknown>;
}

export interface ClientMessage {
  type: ClientType;
  proto?: number;
  seq?: number;
  payload?: Record<string, unknown>;
}

const REGION_MODES = ["flat", "multi-contact", "off"];
const EDIT_OPS = ["create", "create_contact", "move", "retier", "flag", "remove"];

/**
 * Structural validity check for outbound messages. Returns a complaint
 * string, or null when the message is schema-valid.
 */
export function validateClientMessage(msg: ClientMessage): string | null {
  if (!CLIENT_TYPES.includes(msg.type)) return `unknown type ${String(msg.type)}`;
  if (msg.type === "hello") {
    if (msg.proto !== PROTOCOL_VERSION) return "hello must carry proto 1";
    return null;
  }
  if (msg.type === "heartbeat") return null;
  if (!Number.isInteger(msg.seq) || (msg.seq as number) < 1) {
    return "sequenced message needs a positive integer seq";
  }
  const p = msg.payload ?? {};
  switch (msg.type) {
    case "anchor_edit": {
      const op = p["op"];
      if (typeof op !== "string" || !EDIT_OPS.includes(op)) return `bad anchor_edit op ${String(op)}`;
      if (op === "create" && typeof p["anchor"] !== "object") return "create needs an anchor";
      if (op === "create_contact") {
        for (const key of ["body", "body_point", "robot_normal", "env_point", "env_normal"]) {
          if (!(key in p)) return `create_contact missing ${key}`;
        }
      }
      if (["move", "retier", "flag", "remove"].includes(op) && typeof p["id"] !== "string") {
        return `${op} needs an anchor id`;
      }
      return null;
    }
    case "drag_pose":
      if (typeof p["anchor_id"] !== "string") return "drag_pose needs anchor_id";
      if (!("target" in p)) return "drag_pose needs a target";
      return null;
    case "set_region_mode":
      if (!REGION_MODES.includes(p["mode"] as string)) return "bad region mode";
      return null;
    case "project_point":
      if (!Array.isArray(p["point"]) || p["point"].length !== 3) return "project_point needs a 3-vector";
      return null;
    case "import_script":
      if (typeof p["script"] !== "object") return "import_script needs a script document";
      return null;
    default:
      return null;
  }
}

export interface Transport {
  send(line: string): void;
  onMessage(handler: (line: string) => void): void;
  close(): void;
}

/**
 * Builds and sends protocol messages with strictly increasing sequence
 * numbers; refuses to emit anything schema-invalid.
 */
export class SequencedClient {
  private seq = 0;
  readonly sent: ClientMessage[] = [];
  private handlers: Array<(msg: ServerMessage) => void> = [];

  constructor(private transport: Transport) {
    transport.onMessage((line) => {
      let parsed: ServerMessage;
      try {
        parsed = JSON.parse(line) as ServerMessage;
      } catch {
        return; // transport noise is dropped, never rendered
      }
      if (!SERVER_TYPES.includes(parsed.type)) return;
      for (const h of this.handlers) h(parsed);
    });
  }

  onServerMessage(handler: (msg: ServerMessage) => void): void {
    this.handlers.push(handler);
  }

  hello(sessionId?: string): void {
    const msg: ClientMessage = { type: "hello", proto: PROTOCOL_VERSION };
    if (sessionId) msg.payload = { session: sessionId };
    this.emit(msg);
  }

  send(type: ClientType, payload?: Record<string, unknown>): number {
    if (type === "hello" || type === "heartbeat") {
      throw new Error(`${type} is not a sequenced message`);
    }
    const msg: ClientMessage = { type, seq: this.seq + 1 };
    if (payload !== undefined) msg.payload = payload;
    this.emit(msg);
    this.seq += 1;
    return this.seq;
  }

  heartbeat(): void {
    this.emit({ type: "heartbeat" });
  }

  private emit(msg: ClientMessage): void {
    const complaint = validateClientMessage(msg);
    if (complaint) throw new Error(`refusing to send invalid message: ${complaint}`);
    this.sent.push(msg);
    this.transport.send(JSON.stringify(msg));
  }
}
