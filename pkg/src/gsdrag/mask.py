"""Local-editing bookkeeping: per-Gaussian editable flags with handle
tracking and inheritance, plus thresholded/dilated per-view 2D masks."""

import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from .deform import Assignment
from .errors import StaleStateError
from .render import Camera, rasterize_scalar
from .scene import GaussianScene

MASK_THRESHOLD = 0.5
DILATE_PX_AT_512 = 10


def default_dilate_px(width: int) -> int:
    """Dilation radius scaled proportionally with image width."""
    return max(0, round(DILATE_PX_AT_512 * width / 512))


@dataclass
class EditState:
    """Which Gaussians an edit may touch, and which handle tracks each."""

    editable: np.ndarray  # (N,) bool
    handle_of: list[list[int]]  # per Gaussian, handle indices tracking it
    generation: int

    def copy(self) -> "EditState":
        return EditState(
            editable=self.editable.copy(),
            handle_of=[list(h) for h in self.handle_of],
            generation=self.generation,
        )

    def check(self, scene: GaussianScene) -> None:
        if self.generation != scene.generation or len(self.editable) != len(scene):
            raise StaleStateError(
                f"edit state generation {self.generation} (n={len(self.editable)}) does not "
                f"match scene generation {scene.generation} (n={len(scene)})"
            )

    def tracked_indices(self, handle: int) -> np.ndarray:
        return np.asarray(
            [i for i, hs in enumerate(self.handle_of) if handle in hs], dtype=int
        )

    def to_json(self) -> dict:
        return {
            "generation": self.generation,
            "editable": [bool(v) for v in self.editable],
            "handle_of": [list(map(int, h)) for h in self.handle_of],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EditState":
        return cls(
            editable=np.asarray(obj["editable"], dtype=bool),
            handle_of=[list(map(int, h)) for h in obj["handle_of"]],
            generation=int(obj["generation"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)

    @classmethod
    def load(cls, path) -> "EditState":
        with open(path) as f:
            return cls.from_json(json.load(f))


@dataclass
class Mask2D:
    bits: np.ndarray  # (H, W) bool
    view_id: str


def init_edit_state(scene: GaussianScene, assignment: Assignment) -> EditState:
    editable = np.zeros(len(scene), dtype=bool)
    editable[assignment.union] = True
    handle_of: list[list[int]] = [[] for _ in range(len(scene))]
    for h, idxs in enumerate(assignment.per_handle):
        for i in idxs:
            handle_of[int(i)].append(h)
    return EditState(editable=editable, handle_of=handle_of, generation=scene.generation)


def merge_assignment(state: EditState, assignment: Assignment) -> EditState:
    """Fold a fresh capture into an existing state: editable flags grow as a
    union, handle tracking is replaced by the new per-handle lists."""
    out = state.copy()
    out.editable[assignment.union] = True
    out.handle_of = [[] for _ in range(len(state.editable))]
    for h, idxs in enumerate(assignment.per_handle):
        for i in idxs:
            out.handle_of[int(i)].append(h)
    return out


def inherit_on_copy_paste(state: EditState, source_indices, new_count: int) -> EditState:
    """Copies inherit their source's flags; handle tracking moves to the
    copies (sources stay editable but stop being tracked)."""
    source_indices = np.asarray(source_indices, dtype=int)
    if new_count != source_indices.size:
        raise ValueError("one new copy per source is required")
    editable = np.concatenate([state.editable, state.editable[source_indices]])
    handle_of = [list(h) for h in state.handle_of]
    for src in source_indices:
        handle_of.append(list(state.handle_of[int(src)]))
        handle_of[int(src)] = []
    return EditState(editable=editable, handle_of=handle_of, generation=state.generation + 1)


def inherit_on_split(state: EditState, parent_index: int, child_count: int = 2) -> EditState:
    """Appended children copy the parent's editable flag and handle list."""
    editable = np.concatenate(
        [state.editable, np.repeat(state.editable[parent_index], child_count)]
    )
    handle_of = [list(h) for h in state.handle_of]
    for _ in range(child_count):
        handle_of.append(list(state.handle_of[parent_index]))
    return EditState(editable=editable, handle_of=handle_of, generation=state.generation + 1)


def compact(state: EditState, keep: np.ndarray) -> EditState:
    """Drop the rows where keep is False (used when splits remove parents)."""
    return EditState(
        editable=state.editable[keep],
        handle_of=[list(h) for h, k in zip(state.handle_of, keep) if k],
        generation=state.generation + 1,
    )


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.ogrid[-r : r + 1, -r : r + 1]
    return x * x + y * y <= r * r


def render_view_mask(
    scene: GaussianScene,
    state: EditState,
    cam: Camera,
    threshold: float = MASK_THRESHOLD,
    dilate_px: int | None = None,
) -> Mask2D:
    """Rasterize the editable flags, binarize, and dilate.

    Rendering happens on the post-deformation scene, so the faded originals
    and the deformed copies both land in the mask.
    """
    state.check(scene)
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if dilate_px is None:
        dilate_px = default_dilate_px(cam.width)
    soft = rasterize_scalar(scene, cam, state.editable.astype(np.float64))
    bits = soft > threshold
    if dilate_px > 0 and bits.any():
        bits = binary_dilation(bits, structure=_disk(dilate_px))
    return Mask2D(bits=bits, view_id=cam.cam_id)
