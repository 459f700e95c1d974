/**
 * Client-side drag throttling: pointer events arrive far faster than the
 * server's solve tick, so samples are rate-limited to the tick frequency
 * (latest sample wins) to complement the server's drop-intermediate
 * coalescing.
 */

import type { Pose, SequencedClient } from "./protocol.js";

export class DragThrottle {
  private lastSent = -Infinity;
  private pending: { anchorId: string; target: Pose | number[] | number; contactMode: boolean } | null =
    null;
  sentCount = 0;

  constructor(
    private client: SequencedClient,
    private tickHz: number = 30,
  ) {}

  /** A pointer sample at time `now` (seconds). Sends at most tickHz/s. */
  sample(
    anchorId: string,
    target: Pose | number[] | number,
    now: number,
    contactMode = false,
  ): boolean {
    this.pending = { anchorId, target, contactMode };
    if (now - this.lastSent < 1.0 / this.tickHz) return false;
    this.flushPending(now);
    return true;
  }

  /** End of drag: flush the final sample and let the server settle. */
  end(now: number): void {
    if (this.pending) this.flushPending(now);
    this.client.send("drag_end", {});
    this.pending = null;
  }

  private flushPending(now: number): void {
    const p = this.pending;
    if (!p) return;
    const payload: Record<string, unknown> = { anchor_id: p.anchorId, target: p.target };
    if (p.contactMode) payload["contact_mode"] = true;
    this.client.send("drag_pose", payload);
    this.sentCount += 1;
    this.lastSent = now;
    this.pending = null;
  }
}
