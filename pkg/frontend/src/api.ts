/** Typed client for the gsdrag HTTP control API. */

export interface CameraInfo {
  id: string;
  w2c: number[]; // 4x4 row-major
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface SceneInfo {
  count: number;
  sh_degree: number;
  bbox: { min: number[]; max: number[] };
}

export interface DragJson {
  handles: number[][];
  targets: number[][];
  radius: number[];
  k?: number;
}

export interface BufferEntry {
  view_id: string;
  interval: number;
  path: string;
}

export type SessionStatus =
  | "idle"
  | "running-interval"
  | "awaiting-user"
  | "committed"
  | "aborted";

export interface SessionState {
  session_id?: string;
  status: SessionStatus;
  current: number;
  intervals: number;
  views: string[];
  buffer: BufferEntry[];
  drag: DragJson;
  anneal: { s_init: number; s_final: number; passes: number };
  last_error: string | null;
}

export interface StepResult {
  u: number;
  status: SessionStatus;
  losses: { total: number; l1: number; ssim: number; perc: number } | null;
  preview_urls: string[];
}

export interface CreateSessionRequest {
  drag: DragJson;
  T?: number;
  anneal?: { s_init?: number; s_final?: number; passes?: number };
  corrector?: { kind: string; endpoint?: string };
  view_count?: number;
  optimize?: { steps_per_pass?: number; split_per_interval?: boolean };
  seed?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly field?: string,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class GsDragClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private url(path: string, params?: Record<string, string | number | undefined>): string {
    const u = new URL(path, this.baseUrl);
    for (const [k, v] of Object.entries(params ?? {})) {
      if (v !== undefined) u.searchParams.set(k, String(v));
    }
    return u.toString();
  }

  private async json<T>(path: string, init?: RequestInit, params?: Record<string, string | number | undefined>): Promise<T> {
    const resp = await this.fetchFn(this.url(path, params), init);
    if (!resp.ok) {
      let code = "http_error";
      let message = `${resp.status}`;
      let field: string | undefined;
      try {
        const body = (await resp.json()) as { code?: string; message?: string; field?: string };
        code = body.code ?? code;
        message = body.message ?? message;
        field = body.field;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, code, message, field);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.json("/health");
  }

  loadScene(path: string): Promise<{ count: number; sh_degree: number }> {
    return this.json("/scene", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ path }),
    });
  }

  sceneInfo(): Promise<SceneInfo> {
    return this.json("/scene/info");
  }

  async cameras(): Promise<CameraInfo[]> {
    const body = await this.json<{ cameras: CameraInfo[] }>("/cameras");
    return body.cameras;
  }

  renderUrl(cam: string, w?: number, h?: number): string {
    return this.url("/render", { cam, w, h });
  }

  maskUrl(cam: string): string {
    return this.url("/mask", { cam });
  }

  previewUrl(u: number, cam: string): string {
    return this.url("/session/preview", { u, cam });
  }

  async pick(cam: string, x: number, y: number): Promise<[number, number, number] | null> {
    try {
      const body = await this.json<{ point: number[] }>("/pick", undefined, { cam, x, y });
      return body.point as [number, number, number];
    } catch (e) {
      if (e instanceof ApiError && e.status === 404) return null; // empty pixel
      throw e;
    }
  }

  createSession(req: CreateSessionRequest): Promise<{ session_id: string }> {
    return this.json("/session", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  step(): Promise<StepResult> {
    return this.json("/session/step", { method: "POST" });
  }

  stop(): Promise<{ status: SessionStatus; u: number }> {
    return this.json("/session/stop", { method: "POST" });
  }

  commit(): Promise<{ status: SessionStatus; u: number }> {
    return this.json("/session/commit", { method: "POST" });
  }

  sessionState(): Promise<SessionState> {
    return this.json("/session/state");
  }
}
