"""Progressive multi-step drag driver: interval targets, annealed
deform/correct/optimize passes, handle relocation, view selection, and the
history image buffer."""

import csv
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corrector as corrector_mod
from . import imageio
from .corrector import CorrectorHandle
from .deform import (
    DragSpec,
    apply_copy_paste,
    assign_handles,
    handle_transforms,
    interpolate_deformation,
)
from .errors import ContractError, CorrectorError, HandleNotVisibleError
from .mask import (
    EditState,
    inherit_on_copy_paste,
    init_edit_state,
    merge_assignment,
    render_view_mask,
)
from .optimize import (
    DEFAULT_LR_COLOR,
    DEFAULT_LR_OPACITY,
    STEPS_PER_PASS,
    LossWeights,
    MaskedAdam,
    ViewTarget,
    grad_color_opacity,
    select_split_indices,
    split_gaussians,
)
from .render import Camera, rasterize_rgb
from .scene import GaussianScene, save_ply

log = logging.getLogger("gsdrag")

DEFAULT_INTERVALS = 5
DEFAULT_VIEW_COUNT = 50
DEFAULT_FANOUT = 4


@dataclass
class AnnealSchedule:
    """Correction strength ramp over the A dataset-update passes."""

    s_init: float = 0.9
    s_final: float = 0.45
    passes: int = 4
    inclusive: bool = False  # divide by A-1 instead of A (reaches s_final)

    def validate(self):
        if not 0.0 < self.s_init <= 1.0 or not 0.0 < self.s_final <= 1.0:
            raise ContractError("strengths must lie in (0, 1]")
        if self.s_final > self.s_init:
            raise ContractError("s_final must not exceed s_init")
        if self.passes < 1:
            raise ContractError("at least one pass is required")


def anneal_strength(sched: AnnealSchedule, a: int) -> float:
    """Strength for the a-th pass (1-indexed). The printed schedule divides
    by A, so S(A) does not reach s_final unless `inclusive` is set."""
    if not 1 <= a <= sched.passes:
        raise ContractError(f"pass index {a} outside 1..{sched.passes}")
    if sched.inclusive:
        frac = 0.0 if sched.passes == 1 else (a - 1) / (sched.passes - 1)
    else:
        frac = (a - 1) / sched.passes
    return sched.s_init - frac * (sched.s_init - sched.s_final)


def interval_targets(drag: DragSpec, intervals: int, u: int) -> np.ndarray:
    """Progressive target points p_h + (u/T)(p_t - p_h) for interval u.

    The final interval returns the targets themselves so the drag lands
    exactly (the incremental form leaves float dust)."""
    if not 1 <= u <= intervals:
        raise ContractError(f"interval {u} outside 1..{intervals}")
    if u == intervals:
        return drag.targets.copy()
    return drag.handles + (u / intervals) * (drag.targets - drag.handles)


def select_views(
    scene: GaussianScene,
    state: EditState,
    cameras: list[Camera],
    count: int = DEFAULT_VIEW_COUNT,
) -> list[str]:
    """Camera ids ranked by visible editable area (undilated mask pixels),
    largest first, ties by id."""
    if count > len(cameras):
        raise ContractError(f"requested {count} views from {len(cameras)} cameras")
    areas = []
    for cam in cameras:
        m = render_view_mask(scene, state, cam, dilate_px=0)
        areas.append((int(m.bits.sum()), cam.cam_id))
    if all(a == 0 for a, _ in areas):
        raise HandleNotVisibleError("handle not visible from any camera")
    areas.sort(key=lambda t: (-t[0], t[1]))
    return [cid for _, cid in areas[:count]]


def relocate_handles(
    spec: DragSpec,
    state: EditState,
    centers_before: np.ndarray,
    centers_after: np.ndarray,
) -> DragSpec:
    """Move each handle by the mean displacement of its tracked Gaussians.

    Targets are untouched. A handle with no tracked Gaussians stays put
    (logged as a warning).
    """
    handles = spec.handles.copy()
    for i in range(spec.n):
        tracked = state.tracked_indices(i)
        if tracked.size == 0:
            log.warning("handle %d tracks no gaussians; leaving it unmoved", i)
            continue
        handles[i] += (centers_after[tracked] - centers_before[tracked]).mean(axis=0)
    return DragSpec(
        handles=handles,
        targets=spec.targets.copy(),
        radius=spec.radius.copy(),
        k_neighbors=spec.k_neighbors,
    )


@dataclass
class EditSession:
    """Scheduler state for one progressive edit."""

    drag: DragSpec
    intervals: int
    anneal: AnnealSchedule
    corrector: CorrectorHandle
    cameras: dict[str, Camera]
    views: list[str]
    output_dir: Path
    weights: LossWeights = field(default_factory=LossWeights)
    opacity_factor: float = 0.1
    mask_threshold: float = 0.5
    mask_dilate_px: int | None = None
    lr_color: float = DEFAULT_LR_COLOR
    lr_opacity: float = DEFAULT_LR_OPACITY
    steps_per_pass: int = STEPS_PER_PASS
    split_per_interval: bool = True
    background: tuple = (0.0, 0.0, 0.0)
    fanout: int = DEFAULT_FANOUT
    current: int = 0
    status: str = "idle"
    buffer: list[dict] = field(default_factory=list)
    originals: dict[str, np.ndarray] = field(default_factory=dict)
    last_error: str | None = None
    last_losses: dict | None = None

    def state_json(self) -> dict:
        return {
            "status": self.status,
            "current": self.current,
            "intervals": self.intervals,
            "views": list(self.views),
            "buffer": [dict(b) for b in self.buffer],
            "drag": self.drag.to_json(),
            "anneal": {
                "s_init": self.anneal.s_init,
                "s_final": self.anneal.s_final,
                "passes": self.anneal.passes,
            },
            "last_error": self.last_error,
        }


def create_session(
    scene: GaussianScene,
    cameras: list[Camera],
    drag: DragSpec,
    output_dir,
    intervals: int = DEFAULT_INTERVALS,
    anneal: AnnealSchedule | None = None,
    corrector: CorrectorHandle | None = None,
    view_count: int = DEFAULT_VIEW_COUNT,
    **knobs,
) -> tuple[EditSession, EditState]:
    """Validate inputs, pick views, render the originals, seed the history
    buffer, and write the interval-0 snapshot."""
    drag.validate()
    anneal = anneal or AnnealSchedule()
    anneal.validate()
    corrector = corrector or CorrectorHandle(kind="identity")
    corrector_mod.check_health(corrector)

    assignment = assign_handles(scene, drag)
    state = init_edit_state(scene, assignment)
    view_ids = select_views(scene, state, cameras, min(view_count, len(cameras)))

    out = Path(output_dir)
    session = EditSession(
        drag=drag,
        intervals=intervals,
        anneal=anneal,
        corrector=corrector,
        cameras={c.cam_id: c for c in cameras},
        views=view_ids,
        output_dir=out,
        **knobs,
    )

    originals_dir = out / "originals"
    originals_dir.mkdir(parents=True, exist_ok=True)
    for vid in view_ids:
        img = rasterize_rgb(scene, session.cameras[vid], session.background)
        session.originals[vid] = img.pixels
        imageio.save_png(originals_dir / f"{vid}.png", img.pixels)
        # buffer paths are relative to output_dir so runs are byte-stable
        session.buffer.append({"view_id": vid, "interval": 0, "path": f"originals/{vid}.png"})

    snap = out / "interval_0"
    snap.mkdir(parents=True, exist_ok=True)
    save_ply(scene, snap / "scene.ply")
    state.save(snap / "state.json")

    corrector_mod.notify_buffer(
        corrector,
        {"images": session.buffer, "root": str(out), "finetune_iterations": 200},
    )
    return session, state


def _correct_all(session: EditSession, images: dict, strength: float, u: int, a: int) -> dict:
    """Corrector fan-out; results applied in view order regardless of
    completion order."""

    def one(vid):
        return corrector_mod.correct_view(
            session.corrector, images[vid], strength, vid, interval=u, pass_index=a
        )

    if session.fanout <= 1 or session.corrector.kind != "external":
        return {vid: one(vid) for vid in session.views}
    with ThreadPoolExecutor(max_workers=session.fanout) as pool:
        futures = {vid: pool.submit(one, vid) for vid in session.views}
        return {vid: futures[vid].result() for vid in session.views}


def _write_interval_artifacts(session, scene, state, masks, corrected, u):
    idir = session.output_dir / f"interval_{u}"
    (idir / "renders").mkdir(parents=True, exist_ok=True)
    (idir / "masks").mkdir(exist_ok=True)
    (idir / "corrected").mkdir(exist_ok=True)
    save_ply(scene, idir / "scene.ply")
    state.save(idir / "state.json")
    for vid in session.views:
        img = rasterize_rgb(scene, session.cameras[vid], session.background)
        imageio.save_png(idir / "renders" / f"{vid}.png", img.pixels)
        imageio.save_png(idir / "masks" / f"{vid}.png", masks[vid].bits)
        imageio.save_png(idir / "corrected" / f"{vid}.png", corrected[vid])
    return idir


def run_interval(
    session: EditSession, scene: GaussianScene, state: EditState
) -> tuple[EditSession, GaussianScene, EditState]:
    """Execute one progressive-edit interval.

    Deforms toward the interval target, renders and corrects every selected
    view A times with annealed strength, optimizes the masked loss after
    each correction pass, relocates handles by the tracked mean
    displacement, and grows the history buffer. On corrector failure the
    scene rolls back to the interval-start snapshot.
    """
    if session.status not in ("idle", "awaiting-user"):
        raise ContractError(f"cannot run an interval from status {session.status!r}")
    if session.current >= session.intervals:
        raise ContractError("all intervals already executed")

    session.status = "running-interval"
    u = session.current + 1
    snap_scene, snap_state = scene.copy(), state.copy()
    snap_drag = session.drag

    try:
        targets_u = interval_targets(session.drag, session.intervals, u)
        ispec = DragSpec(
            handles=session.drag.handles.copy(),
            targets=targets_u,
            radius=session.drag.radius.copy(),
            k_neighbors=session.drag.k_neighbors,
        )
        assignment = assign_handles(scene, ispec)
        transforms = handle_transforms(ispec)
        deformed = interpolate_deformation(scene, assignment, transforms, ispec)

        before = scene.centers.copy()
        state = merge_assignment(state, assignment)
        sources = assignment.union.copy()
        scene, assignment = apply_copy_paste(
            scene, assignment, deformed, session.opacity_factor
        )
        state = inherit_on_copy_paste(state, sources, sources.size)
        before = np.concatenate([before, before[sources]])

        if session.split_per_interval:
            split_idx = select_split_indices(scene, state)
            if split_idx.size:
                keep = np.ones(len(scene), dtype=bool)
                keep[split_idx] = False
                scene, state = split_gaussians(scene, state, split_idx)
                # children are appended as [+offset block, -offset block]
                before = np.concatenate([before[keep], before[split_idx], before[split_idx]])

        masks = {
            vid: render_view_mask(
                scene,
                state,
                session.cameras[vid],
                threshold=session.mask_threshold,
                dilate_px=session.mask_dilate_px,
            )
            for vid in session.views
        }

        adam = MaskedAdam(len(scene), session.lr_color, session.lr_opacity)
        corrected: dict[str, np.ndarray] = {}
        log_rows = []
        for a in range(1, session.anneal.passes + 1):
            strength = anneal_strength(session.anneal, a)
            renders = {
                vid: rasterize_rgb(scene, session.cameras[vid], session.background).pixels
                for vid in session.views
            }
            corrected = _correct_all(session, renders, strength, u, a)
            view_targets = {
                vid: ViewTarget(
                    original=session.originals[vid],
                    edited=corrected[vid],
                    mask=masks[vid],
                    view_id=vid,
                )
                for vid in session.views
            }
            for step in range(session.steps_per_pass):
                vid = session.views[step % len(session.views)]
                d_dc, d_op, terms = grad_color_opacity(
                    scene,
                    session.cameras[vid],
                    view_targets[vid],
                    session.weights,
                    editable=state.editable,
                    background=session.background,
                )
                adam.step(scene, d_dc, d_op, state.editable)
                log_rows.append(
                    (u, a, vid, terms.total, terms.l1, terms.ssim, terms.perc)
                )

        session.drag = relocate_handles(session.drag, state, before, scene.centers)

        _write_interval_artifacts(session, scene, state, masks, corrected, u)
        for vid in session.views:
            session.buffer.append(
                {"view_id": vid, "interval": u, "path": f"interval_{u}/corrected/{vid}.png"}
            )
        corrector_mod.notify_buffer(
            session.corrector,
            {
                "images": session.buffer,
                "root": str(session.output_dir),
                "finetune_iterations": 50,
            },
        )
        _append_loss_log(session.output_dir / "loss_log.csv", log_rows)

        final_pass = [r for r in log_rows if r[1] == session.anneal.passes]
        if final_pass:
            session.last_losses = {
                key: float(np.mean([r[i] for r in final_pass]))
                for i, key in ((3, "total"), (4, "l1"), (5, "ssim"), (6, "perc"))
            }
        session.last_error = None
        session.current = u
        session.status = "committed" if u == session.intervals else "awaiting-user"
        if session.status == "committed":
            finalize(session, scene, state)
        return session, scene, state

    except CorrectorError as e:
        log.error("interval %d aborted: %s", u, e)
        session.drag = snap_drag
        session.status = "awaiting-user"
        session.last_error = str(e)
        return session, snap_scene, snap_state


def _append_loss_log(path: Path, rows) -> None:
    new = not path.exists()
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(["interval", "pass", "view_id", "total", "l1", "ssim", "perc"])
        for r in rows:
            w.writerow([r[0], r[1], r[2], f"{r[3]:.8f}", f"{r[4]:.8f}", f"{r[5]:.8f}", f"{r[6]:.8f}"])


def stop(session: EditSession, scene: GaussianScene, state: EditState) -> EditSession:
    """Freeze the edit at the current interval and finalize."""
    if session.status != "awaiting-user":
        raise ContractError(f"cannot stop from status {session.status!r}")
    session.status = "committed"
    finalize(session, scene, state)
    return session


def abort(session: EditSession) -> EditSession:
    """Discard the session (already-written interval snapshots stay on disk)."""
    if session.status not in ("idle", "awaiting-user"):
        raise ContractError(f"cannot abort from status {session.status!r}")
    session.status = "aborted"
    return session


def finalize(session: EditSession, scene: GaussianScene, state: EditState) -> None:
    """Mirror the committed interval into final/."""
    final = session.output_dir / "final"
    if final.exists():
        shutil.rmtree(final)
    src = session.output_dir / f"interval_{session.current}"
    if src.exists():
        shutil.copytree(src, final)
    else:
        final.mkdir(parents=True)
        save_ply(scene, final / "scene.ply")
        state.save(final / "state.json")
