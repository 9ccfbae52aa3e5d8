"""Command-line pipeline runner: one-shot deformation, the full progressive
edit, batch rendering, and the HTTP service."""

import json
import logging
import os
from pathlib import Path

import click

from . import scheduler
from .config import load_config
from .deform import apply_copy_paste, assign_handles, handle_transforms, interpolate_deformation
from .errors import GsDragError, ValidationError
from .imageio import save_png
from .mask import inherit_on_copy_paste, init_edit_state, render_view_mask
from .render import load_cameras, rasterize_rgb
from .scene import load_ply, save_ply

log = logging.getLogger("gsdrag")


def _setup_logging():
    level = os.environ.get("GSDRAG_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")


@click.group()
def main():
    """Drag-based editing for 3D Gaussian splatting scenes."""
    _setup_logging()


def _load_inputs(config_path):
    cfg = load_config(config_path)
    scene = load_ply(cfg.scene_path)
    cameras = load_cameras(cfg.cameras_path)
    return cfg, scene, cameras


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def deform(config_path):
    """One-shot deformation without correction or optimization."""
    try:
        cfg, scene, cameras = _load_inputs(config_path)
        assignment = assign_handles(scene, cfg.drag)
        transforms = handle_transforms(cfg.drag)
        deformed = interpolate_deformation(scene, assignment, transforms, cfg.drag)
        state = init_edit_state(scene, assignment)
        sources = assignment.union.copy()
        scene, assignment = apply_copy_paste(scene, assignment, deformed, cfg.opacity_factor)
        state = inherit_on_copy_paste(state, sources, sources.size)

        out = cfg.output_dir
        (out / "masks").mkdir(parents=True, exist_ok=True)
        save_ply(scene, out / "deformed.ply")
        state.save(out / "state.json")
        view_ids = scheduler.select_views(
            scene, state, cameras, min(cfg.view_count, len(cameras))
        )
        cams = {c.cam_id: c for c in cameras}
        for vid in view_ids:
            m = render_view_mask(
                scene, state, cams[vid], threshold=cfg.mask_threshold, dilate_px=cfg.mask_dilate_px
            )
            save_png(out / "masks" / f"{vid}.png", m.bits)
        click.echo(f"deformed scene written to {out / 'deformed.ply'} ({len(scene)} gaussians)")
    except GsDragError as e:
        _fail(e)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--resume", is_flag=True, help="continue from the last interval snapshot")
def edit(config_path, resume):
    """Run the full multi-interval edit pipeline."""
    try:
        cfg, scene, cameras = _load_inputs(config_path)
        if resume:
            session, scene, state = _resume_session(cfg, cameras)
        else:
            session, state = scheduler.create_session(
                scene,
                cameras,
                cfg.drag,
                cfg.output_dir,
                intervals=cfg.intervals,
                anneal=cfg.anneal,
                corrector=cfg.corrector,
                view_count=min(cfg.view_count, len(cameras)),
                **cfg.session_knobs(),
            )
            _save_session_json(session)
        while session.status in ("idle", "awaiting-user") and session.current < session.intervals:
            session, scene, state = scheduler.run_interval(session, scene, state)
            if session.last_error:
                _save_session_json(session)
                raise click.ClickException(
                    f"interval {session.current + 1} aborted: {session.last_error} "
                    f"(snapshot retained; rerun with --resume)"
                )
            _save_session_json(session)
            click.echo(f"interval {session.current}/{session.intervals} done")
        click.echo(f"edit committed; final scene in {session.output_dir / 'final'}")
    except GsDragError as e:
        _fail(e)


def _save_session_json(session):
    with open(session.output_dir / "session.json", "w") as f:
        json.dump(session.state_json(), f, indent=1)


def _resume_session(cfg, cameras):
    from .deform import DragSpec
    from .imageio import load_png
    from .mask import EditState

    sess_path = cfg.output_dir / "session.json"
    if not sess_path.exists():
        raise ValidationError(f"nothing to resume: {sess_path} not found")
    with open(sess_path) as f:
        doc = json.load(f)
    u = int(doc["current"])
    snap = cfg.output_dir / f"interval_{u}"
    scene = load_ply(snap / "scene.ply")
    state = EditState.load(snap / "state.json")
    # the PLY format does not carry the generation counter; the snapshot
    # pair is consistent by construction, so reunite them
    scene.generation = state.generation
    session = scheduler.EditSession(
        drag=DragSpec.from_json(doc["drag"]),
        intervals=int(doc["intervals"]),
        anneal=cfg.anneal,
        corrector=cfg.corrector,
        cameras={c.cam_id: c for c in cameras},
        views=list(doc["views"]),
        output_dir=cfg.output_dir,
        current=u,
        status="awaiting-user" if u < int(doc["intervals"]) else "committed",
        buffer=list(doc["buffer"]),
        **cfg.session_knobs(),
    )
    for vid in session.views:
        session.originals[vid] = load_png(cfg.output_dir / "originals" / f"{vid}.png")
    return session, scene, state


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def render(config_path):
    """Batch-render every camera to PNG."""
    try:
        cfg, scene, cameras = _load_inputs(config_path)
        out = cfg.output_dir / "renders"
        out.mkdir(parents=True, exist_ok=True)
        for cam in cameras:
            img = rasterize_rgb(scene, cam, cfg.background)
            save_png(out / f"{cam.cam_id}.png", img.pixels)
        click.echo(f"{len(cameras)} views rendered to {out}")
    except GsDragError as e:
        _fail(e)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1")
def serve(config_path, port, host):
    """Serve the HTTP control API."""
    try:
        import uvicorn

        from .service import create_app

        cfg = load_config(config_path)
        app = create_app(cfg)
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except GsDragError as e:
        _fail(e)


def _fail(e: GsDragError):
    field = getattr(e, "field", None)
    msg = f"{e} [{field}]" if field else str(e)
    raise click.ClickException(msg)


if __name__ == "__main__":
    main()
