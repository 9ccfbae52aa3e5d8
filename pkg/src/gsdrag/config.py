"""Single-document JSON edit configuration with field-path validation.

Defaults mirror the module-level defaults, so a config that only names the
scene, cameras, drag, and output directory reproduces the default pipeline.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corrector import CorrectorHandle
from .deform import DragSpec
from .errors import ValidationError
from .optimize import DEFAULT_LR_COLOR, DEFAULT_LR_OPACITY, STEPS_PER_PASS, LossWeights
from .scheduler import DEFAULT_INTERVALS, DEFAULT_VIEW_COUNT, AnnealSchedule


@dataclass
class EditConfig:
    scene_path: Path
    cameras_path: Path
    drag: DragSpec
    output_dir: Path
    intervals: int = DEFAULT_INTERVALS
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    corrector: CorrectorHandle = field(default_factory=lambda: CorrectorHandle(kind="identity"))
    view_count: int = DEFAULT_VIEW_COUNT
    weights: LossWeights = field(default_factory=LossWeights)
    opacity_factor: float = 0.1
    mask_threshold: float = 0.5
    mask_dilate_px: int | None = None
    lr_color: float = DEFAULT_LR_COLOR
    lr_opacity: float = DEFAULT_LR_OPACITY
    steps_per_pass: int = STEPS_PER_PASS
    split_per_interval: bool = True
    background: tuple = (0.0, 0.0, 0.0)
    seed: int = 0

    def session_knobs(self) -> dict:
        return dict(
            weights=self.weights,
            opacity_factor=self.opacity_factor,
            mask_threshold=self.mask_threshold,
            mask_dilate_px=self.mask_dilate_px,
            lr_color=self.lr_color,
            lr_opacity=self.lr_opacity,
            steps_per_pass=self.steps_per_pass,
            split_per_interval=self.split_per_interval,
            background=self.background,
        )


def _get(doc, path, default=None, required=False):
    cur = doc
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required:
                raise ValidationError(f"missing required field {path}", field=path)
            return default
        cur = cur[part]
    return cur


def _number(doc, path, default, lo=None, hi=None, integer=False):
    v = _get(doc, path, default)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ValidationError(f"{path} must be a number, got {v!r}", field=path)
    if integer and int(v) != v:
        raise ValidationError(f"{path} must be an integer, got {v!r}", field=path)
    if lo is not None and v < lo:
        raise ValidationError(f"{path} must be >= {lo}, got {v}", field=path)
    if hi is not None and v > hi:
        raise ValidationError(f"{path} must be <= {hi}, got {v}", field=path)
    return int(v) if integer else float(v)


def parse_config(doc: dict, base_dir: Path | None = None, require_paths: bool = True) -> EditConfig:
    base = Path(base_dir) if base_dir else Path(".")

    def respath(key):
        raw = _get(doc, key, default=".", required=require_paths)
        p = Path(raw)
        return p if p.is_absolute() else base / p

    scene_path = respath("scene_path")
    cameras_path = respath("cameras_path")
    if require_paths:
        if not scene_path.exists():
            raise ValidationError(f"scene_path does not exist: {scene_path}", field="scene_path")
        if not cameras_path.exists():
            raise ValidationError(f"cameras_path does not exist: {cameras_path}", field="cameras_path")

    drag_doc = _get(doc, "drag", required=True)
    handles = drag_doc.get("handles")
    targets = drag_doc.get("targets")
    radius = drag_doc.get("radius")
    if handles is None:
        raise ValidationError("missing drag.handles", field="drag.handles")
    if targets is None:
        raise ValidationError("missing drag.targets", field="drag.targets")
    if radius is None:
        raise ValidationError("missing drag.radius", field="drag.radius")
    drag = DragSpec(
        handles=np.asarray(handles, dtype=np.float64),
        targets=np.asarray(targets, dtype=np.float64),
        radius=np.asarray(radius, dtype=np.float64),
        k_neighbors=int(drag_doc.get("k", 2)),
    )
    drag.validate()

    anneal = AnnealSchedule(
        s_init=_number(doc, "anneal.s_init", 0.9, lo=0.0, hi=1.0),
        s_final=_number(doc, "anneal.s_final", 0.45, lo=0.0, hi=1.0),
        passes=_number(doc, "anneal.passes", 4, lo=1, integer=True),
        inclusive=bool(_get(doc, "anneal.inclusive", False)),
    )
    anneal.validate()

    kind = _get(doc, "corrector.kind", "identity")
    corrector = CorrectorHandle(
        kind=kind,
        endpoint=_get(doc, "corrector.endpoint", ""),
        seed=_number(doc, "seed", 0, integer=True),
    )

    weights = LossWeights(
        lambda_l1=_number(doc, "loss.l1", 8.0, lo=0.0),
        lambda_ssim=_number(doc, "loss.ssim", 2.0, lo=0.0),
        lambda_perc=_number(doc, "loss.perc", 1.0, lo=0.0),
        perceptual=_get(doc, "loss.perceptual", "l1"),
    )
    weights.validate()

    bg = _get(doc, "background", [0.0, 0.0, 0.0])
    if not (isinstance(bg, list) and len(bg) == 3):
        raise ValidationError("background must be an [r, g, b] list", field="background")

    dilate = _get(doc, "mask.dilate_px", None)
    if dilate is not None:
        dilate = _number(doc, "mask.dilate_px", None, lo=0, integer=True)

    return EditConfig(
        scene_path=scene_path,
        cameras_path=cameras_path,
        drag=drag,
        output_dir=Path(_get(doc, "output_dir", required=True)),
        intervals=_number(doc, "intervals", DEFAULT_INTERVALS, lo=1, integer=True),
        anneal=anneal,
        corrector=corrector,
        view_count=_number(doc, "view_count", DEFAULT_VIEW_COUNT, lo=1, integer=True),
        weights=weights,
        opacity_factor=_number(doc, "opacity_factor", 0.1, lo=1e-9, hi=1.0),
        mask_threshold=_number(doc, "mask.threshold", 0.5, lo=1e-9, hi=1.0 - 1e-9),
        mask_dilate_px=dilate,
        lr_color=_number(doc, "optimize.lr_color", DEFAULT_LR_COLOR, lo=0.0),
        lr_opacity=_number(doc, "optimize.lr_opacity", DEFAULT_LR_OPACITY, lo=0.0),
        steps_per_pass=_number(doc, "optimize.steps_per_pass", STEPS_PER_PASS, lo=1, integer=True),
        split_per_interval=bool(_get(doc, "optimize.split_per_interval", True)),
        background=tuple(float(v) for v in bg),
        seed=_number(doc, "seed", 0, integer=True),
    )


def load_config(path) -> EditConfig:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"config is not valid JSON: {e}") from e
    return parse_config(doc, base_dir=path.parent)
