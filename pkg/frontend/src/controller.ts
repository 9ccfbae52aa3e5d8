/** Headless session controller: everything the UI buttons do, with no DOM.
 * The browser shell and the replay tests drive the same code paths. */

import {
  ApiError,
  type CameraInfo,
  type CreateSessionRequest,
  GsDragClient,
  type SessionState,
  type StepResult,
} from "./api.js";
import { projectToPixel, type Vec3 } from "./geometry.js";
import { SessionStore } from "./state.js";

export interface PickOutcome {
  point: Vec3 | null;
  role: "handle" | "target" | null;
}

export class SessionController {
  cameras = new Map<string, CameraInfo>();
  busy = false;

  constructor(
    readonly client: GsDragClient,
    readonly store: SessionStore = new SessionStore(),
  ) {}

  async init(): Promise<void> {
    const cams = await this.client.cameras();
    this.cameras = new Map(cams.map((c) => [c.id, c]));
    if (!this.store.selectedCamera && cams.length) {
      this.store.selectedCamera = cams[0].id;
    }
    await this.refresh();
  }

  selectCamera(id: string): void {
    if (!this.cameras.has(id)) throw new Error(`unknown camera ${id}`);
    this.store.selectedCamera = id;
  }

  /** Click-to-place: picks the 3D point under the pixel; an empty pixel
   * places nothing (the UI shows a toast). */
  async pickAt(pixelX: number, pixelY: number): Promise<PickOutcome> {
    const cam = this.store.selectedCamera;
    if (!cam) throw new Error("no camera selected");
    const point = await this.client.pick(cam, Math.round(pixelX), Math.round(pixelY));
    if (point === null) return { point: null, role: null };
    const role = this.store.placePoint(point);
    return { point, role };
  }

  /** Pixel position of a placed point in a given camera (marker overlay
   * and cross-view consistency checks). */
  reproject(camId: string, point: Vec3): [number, number] | null {
    const cam = this.cameras.get(camId);
    if (!cam) throw new Error(`unknown camera ${camId}`);
    return projectToPixel(cam, point);
  }

  /** Submits the authored pairs atomically. */
  async createSession(options: Omit<CreateSessionRequest, "drag"> = {}): Promise<string> {
    const req: CreateSessionRequest = { drag: this.store.toDrag(), ...options };
    const { session_id } = await this.runExclusive(() => this.client.createSession(req));
    await this.refresh();
    return session_id;
  }

  async step(): Promise<StepResult> {
    const result = await this.runExclusive(() => this.client.step());
    await this.refresh();
    return result;
  }

  async stopSession(): Promise<SessionState | null> {
    await this.runExclusive(() => this.client.stop());
    return this.refresh();
  }

  async commit(): Promise<SessionState | null> {
    await this.runExclusive(() => this.client.commit());
    return this.refresh();
  }

  /** Rehydrates the mirror from the server; the UI calls this on load so a
   * browser refresh never diverges from server state. */
  async refresh(): Promise<SessionState | null> {
    try {
      const state = await this.client.sessionState();
      this.store.applyServerState(state);
      return state;
    } catch (e) {
      if (e instanceof ApiError && e.status === 409) {
        this.store.server = null;
        return null; // no session yet
      }
      throw e;
    }
  }

  /** At most one session-mutating request in flight (controls disable). */
  private async runExclusive<T>(fn: () => Promise<T>): Promise<T> {
    if (this.busy) throw new Error("another session request is in flight");
    this.busy = true;
    try {
      return await fn();
    } finally {
      this.busy = false;
    }
  }
}
