"""HTTP control service: scene loading, rendering, picking, and session
stepping. Read endpoints are concurrent; session mutations run through a
single FIFO command queue."""

import logging
import queue
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import scheduler
from .config import EditConfig, parse_config
from .corrector import encode_png
from .errors import (
    ContractError,
    CorrectorError,
    GsDragError,
    ValidationError,
)
from .mask import render_view_mask
from .render import load_cameras
from .render import pick as pick_point
from .render import rasterize_rgb
from .scene import load_ply

log = logging.getLogger("gsdrag")


def _error(status: int, code: str, message: str, field: str | None = None) -> JSONResponse:
    body = {"code": code, "message": message}
    if field:
        body["field"] = field
    return JSONResponse(body, status_code=status)


class CommandQueue:
    """Runs submitted callables one at a time in submission order."""

    def __init__(self):
        self._q: queue.Queue = queue.Queue()
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def _run(self):
        while True:
            fn, box, done = self._q.get()
            try:
                box["result"] = fn()
            except Exception as e:  # noqa: BLE001 - forwarded to caller
                box["error"] = e
            done.set()

    def submit(self, fn):
        box: dict = {}
        done = threading.Event()
        self._q.put((fn, box, done))
        done.wait()
        if "error" in box:
            raise box["error"]
        return box["result"]


class ServiceState:
    def __init__(self, config: EditConfig | None = None):
        self.config = config
        self.scene = None
        self.cameras = {}
        self.session = None
        self.edit_state = None
        self.session_id = None
        self._session_counter = 0
        self.commands = CommandQueue()

    def next_session_id(self) -> str:
        self._session_counter += 1
        return f"session-{self._session_counter:04d}"


def create_app(config: EditConfig | None = None) -> FastAPI:
    app = FastAPI(title="gsdrag")
    st = ServiceState(config)
    app.state.gsdrag = st

    if config is not None:
        st.scene = load_ply(config.scene_path)
        st.cameras = {c.cam_id: c for c in load_cameras(config.cameras_path)}

    @app.exception_handler(GsDragError)
    async def _gsdrag_error(request: Request, exc: GsDragError):
        if isinstance(exc, ValidationError):
            return _error(400, "validation", str(exc), getattr(exc, "field", None))
        if isinstance(exc, CorrectorError):
            return _error(502, "corrector", str(exc))
        if isinstance(exc, ContractError):
            return _error(409, "contract", str(exc))
        return _error(400, "error", str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/scene")
    def post_scene(body: dict):
        path = body.get("path")
        if not path:
            return _error(400, "validation", "missing scene path", "path")
        if st.session is not None and st.session.status in ("running-interval", "awaiting-user", "idle"):
            return _error(409, "session_active", "cannot swap scenes during a session")

        def do():
            st.scene = load_ply(path)
            st.session = None
            st.edit_state = None
            return {"count": len(st.scene), "sh_degree": st.scene.sh_degree}

        return st.commands.submit(do)

    @app.get("/scene/info")
    def scene_info():
        if st.scene is None:
            return _error(409, "no_scene", "no scene loaded")
        lo, hi = st.scene.bbox
        return {
            "count": len(st.scene),
            "sh_degree": st.scene.sh_degree,
            "bbox": {"min": lo.tolist(), "max": hi.tolist()},
        }

    @app.get("/cameras")
    def cameras():
        return {"cameras": [c.to_json() for c in st.cameras.values()]}

    @app.get("/render")
    def render(cam: str, w: int | None = None, h: int | None = None):
        if st.scene is None:
            return _error(409, "no_scene", "no scene loaded")
        camera = st.cameras.get(cam)
        if camera is None:
            return _error(404, "no_camera", f"unknown camera {cam!r}")
        if w or h:
            camera = camera.resized(w or camera.width, h or camera.height)
        bg = st.config.background if st.config else (0.0, 0.0, 0.0)
        img = rasterize_rgb(st.scene, camera, bg)
        return Response(encode_png(img.pixels), media_type="image/png")

    @app.get("/mask")
    def mask(cam: str):
        if st.scene is None:
            return _error(409, "no_scene", "no scene loaded")
        if st.edit_state is None:
            return _error(409, "no_session", "no edit state; create a session first")
        camera = st.cameras.get(cam)
        if camera is None:
            return _error(404, "no_camera", f"unknown camera {cam!r}")
        m = render_view_mask(st.scene, st.edit_state, camera)
        return Response(
            encode_png(m.bits.astype(np.float64)[:, :, None].repeat(3, axis=2)),
            media_type="image/png",
        )

    @app.get("/pick")
    def pick(cam: str, x: int, y: int):
        if st.scene is None:
            return _error(409, "no_scene", "no scene loaded")
        camera = st.cameras.get(cam)
        if camera is None:
            return _error(404, "no_camera", f"unknown camera {cam!r}")
        point = pick_point(st.scene, camera, (x, y))
        if point is None:
            return _error(404, "empty_pixel", "nothing composited at this pixel")
        return {"point": [float(v) for v in point]}

    @app.post("/session")
    def create_session(body: dict):
        if st.scene is None:
            return _error(409, "no_scene", "no scene loaded")
        if st.session is not None and st.session.status in ("idle", "running-interval", "awaiting-user"):
            return _error(409, "session_active", "a session is already active")

        def do():
            cfg = st.config
            base = dict(body)
            if "T" in base and "intervals" not in base:
                base["intervals"] = base.pop("T")
            out_dir = Path(base.get("output_dir") or (cfg.output_dir if cfg else "gsdrag-out"))
            merged = {
                "scene_path": str(cfg.scene_path) if cfg else "unused",
                "cameras_path": str(cfg.cameras_path) if cfg else "unused",
                "output_dir": str(out_dir),
            }
            merged.update(base)
            if cfg is not None:
                merged.setdefault("corrector", {"kind": cfg.corrector.kind, "endpoint": cfg.corrector.endpoint})
                merged.setdefault("view_count", cfg.view_count)
                merged.setdefault("seed", cfg.seed)
            session_cfg = _session_config(merged, st)
            session, state = scheduler.create_session(
                st.scene,
                list(st.cameras.values()),
                session_cfg.drag,
                session_cfg.output_dir,
                intervals=session_cfg.intervals,
                anneal=session_cfg.anneal,
                corrector=session_cfg.corrector,
                view_count=min(session_cfg.view_count, len(st.cameras)),
                **session_cfg.session_knobs(),
            )
            st.session = session
            st.edit_state = state
            st.session_id = st.next_session_id()
            return {"session_id": st.session_id}

        return st.commands.submit(do)

    @app.post("/session/step")
    def session_step():
        if st.session is None:
            return _error(409, "no_session", "no active session")

        def do():
            session, scene, state = scheduler.run_interval(st.session, st.scene, st.edit_state)
            st.session, st.scene, st.edit_state = session, scene, state
            if session.last_error:
                return _error(502, "corrector", session.last_error)
            u = session.current
            return {
                "u": u,
                "status": session.status,
                "losses": session.last_losses,
                "preview_urls": [
                    f"/session/preview?u={u}&cam={vid}" for vid in session.views
                ],
            }

        return st.commands.submit(do)

    @app.post("/session/stop")
    def session_stop():
        if st.session is None:
            return _error(409, "no_session", "no active session")

        def do():
            scheduler.stop(st.session, st.scene, st.edit_state)
            return {"status": st.session.status, "u": st.session.current}

        return st.commands.submit(do)

    @app.post("/session/commit")
    def session_commit():
        if st.session is None:
            return _error(409, "no_session", "no active session")

        def do():
            if st.session.status == "awaiting-user":
                scheduler.stop(st.session, st.scene, st.edit_state)
            elif st.session.status != "committed":
                raise ContractError(f"cannot commit from status {st.session.status!r}")
            return {"status": st.session.status, "u": st.session.current}

        return st.commands.submit(do)

    @app.get("/session/state")
    def session_state():
        if st.session is None:
            return _error(409, "no_session", "no active session")
        body = st.session.state_json()
        body["session_id"] = st.session_id
        return body

    @app.get("/session/preview")
    def session_preview(u: int, cam: str):
        if st.session is None:
            return _error(409, "no_session", "no active session")
        if u == 0:
            path = st.session.output_dir / "originals" / f"{cam}.png"
        else:
            path = st.session.output_dir / f"interval_{u}" / "renders" / f"{cam}.png"
        if not path.exists():
            return _error(404, "no_preview", f"no preview for interval {u}, camera {cam!r}")
        return Response(path.read_bytes(), media_type="image/png")

    return app


def _session_config(merged: dict, st: ServiceState) -> EditConfig:
    """Parse session-creation JSON via the config machinery; the scene and
    cameras are already loaded, so their paths are not re-validated."""
    return parse_config(dict(merged), base_dir=Path("."), require_paths=False)
