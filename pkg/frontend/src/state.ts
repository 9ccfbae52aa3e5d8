/** Client-side session state: point pairs being authored, the selected
 * camera, and the latest server mirror. Pairs are always authored handle
 * first; the whole set is submitted atomically at session creation. */

import type { DragJson, SessionState } from "./api.js";
import type { Vec3 } from "./geometry.js";

export interface PointPair {
  handle: Vec3;
  target: Vec3 | null;
  radius: number;
}

export class SessionStore {
  pairs: PointPair[] = [];
  defaultRadius = 0.5;
  selectedCamera: string | null = null;
  server: SessionState | null = null;

  /** Alternates handle/target: an incomplete pair receives its target,
   * otherwise a new pair starts. Returns which role the point took. */
  placePoint(point: Vec3): "handle" | "target" {
    const last = this.pairs[this.pairs.length - 1];
    if (last && last.target === null) {
      last.target = point;
      return "target";
    }
    this.pairs.push({ handle: point, target: null, radius: this.defaultRadius });
    return "handle";
  }

  undoPoint(): void {
    const last = this.pairs[this.pairs.length - 1];
    if (!last) return;
    if (last.target !== null) {
      last.target = null;
    } else {
      this.pairs.pop();
    }
  }

  clearPairs(): void {
    this.pairs = [];
  }

  setRadius(radius: number): void {
    if (!(radius > 0)) throw new Error("radius must be positive");
    this.defaultRadius = radius;
    for (const pair of this.pairs) pair.radius = radius;
  }

  get complete(): boolean {
    return this.pairs.length > 0 && this.pairs.every((p) => p.target !== null);
  }

  toDrag(): DragJson {
    if (!this.complete) throw new Error("every handle needs a target before submitting");
    return {
      handles: this.pairs.map((p) => [...p.handle]),
      targets: this.pairs.map((p) => [...(p.target as Vec3)]),
      radius: this.pairs.map((p) => p.radius),
      k: 2,
    };
  }

  /** Server state wins on refresh; local authoring is only meaningful
   * before a session exists. */
  applyServerState(state: SessionState): void {
    this.server = state;
    if (state.status !== "idle") this.clearPairs();
  }

  get sessionActive(): boolean {
    return (
      this.server !== null &&
      (this.server.status === "idle" ||
        this.server.status === "running-interval" ||
        this.server.status === "awaiting-user")
    );
  }
}
