"""Drag deformation: handle assignment, per-handle rigid transforms,
KNN-weighted interpolation, and copy-and-paste placement."""

import json
from dataclasses import dataclass

import numpy as np

from . import quat
from .errors import NoGaussiansCapturedError, ValidationError
from .scene import GaussianScene

GRID_ASSIGN_THRESHOLD = 100_000


@dataclass
class DragSpec:
    """User drag input: paired 3D handle/target points with capture radii."""

    handles: np.ndarray  # (n, 3)
    targets: np.ndarray  # (n, 3)
    radius: np.ndarray  # (n,), > 0
    k_neighbors: int = 2

    def __post_init__(self):
        self.handles = np.atleast_2d(np.asarray(self.handles, dtype=np.float64))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        self.radius = np.atleast_1d(np.asarray(self.radius, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.handles.shape[0]

    def validate(self) -> None:
        if self.handles.shape[0] != self.targets.shape[0]:
            raise ValidationError("handles and targets must have equal count", field="drag.targets")
        if self.handles.shape[0] < 1:
            raise ValidationError("at least one handle is required", field="drag.handles")
        if self.handles.shape[1:] != (3,) or self.targets.shape[1:] != (3,):
            raise ValidationError("points must be 3-vectors", field="drag.handles")
        if self.radius.shape[0] != self.handles.shape[0]:
            raise ValidationError("radius must have one entry per handle", field="drag.radius")
        for i, r in enumerate(self.radius):
            if not r > 0:
                raise ValidationError(f"radius must be positive, got {r}", field=f"drag.radius[{i}]")
        if self.k_neighbors < 1:
            raise ValidationError("k must be >= 1", field="drag.k")

    def to_json(self) -> dict:
        return {
            "handles": self.handles.tolist(),
            "targets": self.targets.tolist(),
            "radius": self.radius.tolist(),
            "k": self.k_neighbors,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DragSpec":
        try:
            spec = cls(
                handles=np.asarray(obj["handles"], dtype=np.float64),
                targets=np.asarray(obj["targets"], dtype=np.float64),
                radius=np.asarray(obj["radius"], dtype=np.float64),
                k_neighbors=int(obj.get("k", 2)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"bad drag spec: {e}", field="drag") from e
        spec.validate()
        return spec

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass
class HandleTransform:
    """Rigid motion attached to one handle point."""

    translation: np.ndarray  # (3,)
    rotation: np.ndarray  # (4,) unit quaternion


@dataclass
class Assignment:
    """Gaussians captured by each handle sphere, plus their union."""

    per_handle: list[np.ndarray]
    union: np.ndarray  # sorted, deduplicated


def assign_handles(scene: GaussianScene, spec: DragSpec) -> Assignment:
    """Capture Gaussians within each handle's radius.

    Exhaustive for ordinary scenes; a uniform grid keyed on the largest
    radius kicks in above GRID_ASSIGN_THRESHOLD elements.
    """
    spec.validate()
    centers = scene.centers
    if len(scene) > GRID_ASSIGN_THRESHOLD:
        per_handle = _assign_grid(centers, spec)
    else:
        d2 = np.sum((centers[None, :, :] - spec.handles[:, None, :]) ** 2, axis=2)
        per_handle = [np.flatnonzero(d2[i] <= spec.radius[i] ** 2) for i in range(spec.n)]
    union = np.unique(np.concatenate(per_handle)) if per_handle else np.empty(0, dtype=int)
    if union.size == 0:
        raise NoGaussiansCapturedError(
            "no gaussians captured: every center lies outside all handle radii"
        )
    return Assignment(per_handle=per_handle, union=union)


def _assign_grid(centers, spec):
    cell = float(spec.radius.max())
    keys = np.floor(centers / cell).astype(np.int64)
    buckets: dict[tuple, list[int]] = {}
    for idx, k in enumerate(map(tuple, keys)):
        buckets.setdefault(k, []).append(idx)
    per_handle = []
    for i in range(spec.n):
        base = np.floor(spec.handles[i] / cell).astype(np.int64)
        # radius <= cell, so +-1 cells around the handle cover the sphere
        cand: list[int] = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    cand.extend(buckets.get((base[0] + dx, base[1] + dy, base[2] + dz), ()))
        cand = np.asarray(sorted(cand), dtype=int)
        if cand.size == 0:
            per_handle.append(cand)
            continue
        d2 = np.sum((centers[cand] - spec.handles[i]) ** 2, axis=1)
        per_handle.append(cand[d2 <= spec.radius[i] ** 2])
    return per_handle


def _knn_weights(query, points, k):
    """Indices of the k nearest points per query row, plus the linear
    weights 1 - d_k^2 / sum_j d_j^2 over that neighborhood."""
    d2 = np.sum((query[:, None, :] - points[None, :, :]) ** 2, axis=2)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    nd2 = np.take_along_axis(d2, order, axis=1)
    total = nd2.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        w = 1.0 - nd2 / total
    w[total[:, 0] == 0.0] = 1.0  # query coincides with its whole neighborhood
    if k == 1:
        w[:] = 1.0  # lone neighbor would get weight 0; full weight is intended
    return order, w


def handle_transforms(spec: DragSpec) -> list[HandleTransform]:
    """Per-handle translation and blended pairwise rotation.

    A single handle gets the identity rotation. Otherwise each handle's
    rotation is the hemisphere-aligned weighted blend of shortest-arc
    rotations against its K nearest other handles.
    """
    spec.validate()
    n = spec.n
    translations = spec.targets - spec.handles
    if n == 1:
        return [HandleTransform(translations[0], quat.IDENTITY.copy())]

    d2 = np.sum((spec.handles[:, None, :] - spec.handles[None, :, :]) ** 2, axis=2)
    off_diag = d2 + np.where(np.eye(n, dtype=bool), np.inf, 0.0)
    if np.any(off_diag == 0.0):
        i, k = np.argwhere(off_diag == 0.0)[0]
        raise ValidationError(f"handles {i} and {k} coincide", field=f"drag.handles[{k}]")

    k = min(spec.k_neighbors, n - 1)
    out = []
    for i in range(n):
        order = np.argsort(off_diag[i], kind="stable")[:k]
        rots = np.stack(
            [
                quat.rotation_between(
                    spec.handles[j] - spec.handles[i], spec.targets[j] - spec.targets[i]
                )
                for j in order
            ]
        )
        if k == 1:
            dq = rots[0]
        else:
            nd2 = off_diag[i, order]
            w = 1.0 - nd2 / nd2.sum()
            dq = quat.blend(rots, w)
        out.append(HandleTransform(translations[i], dq))
    return out


def interpolate_deformation(
    scene: GaussianScene,
    assignment: Assignment,
    transforms: list[HandleTransform],
    spec: DragSpec,
):
    """Deformed (center, rotation) for every Gaussian in the union.

    Each Gaussian takes its K nearest handles, weights them linearly by
    squared distance, translates by the weighted translations, and rotates
    by the hemisphere-aligned blend of the handle rotations.
    """
    idx = assignment.union
    mu = scene.centers[idx]
    k = min(spec.k_neighbors, spec.n)
    order, w = _knn_weights(mu, spec.handles, k)

    dp = np.stack([t.translation for t in transforms])
    dq = np.stack([t.rotation for t in transforms])

    centers_d = mu + np.einsum("gk,gkc->gc", w, dp[order])

    picked = dq[order]  # (G, k, 4)
    signs = np.where(np.einsum("gkq,gq->gk", picked, picked[:, 0, :]) < 0.0, -1.0, 1.0)
    blended = np.einsum("gk,gkq->gq", w * signs, picked)
    blended /= np.linalg.norm(blended, axis=1, keepdims=True)
    rotations_d = quat.multiply(blended, scene.rotations[idx])
    return centers_d, rotations_d


def apply_copy_paste(
    scene: GaussianScene,
    assignment: Assignment,
    deformed: tuple[np.ndarray, np.ndarray],
    opacity_factor: float = 0.1,
) -> tuple[GaussianScene, Assignment]:
    """Append deformed copies of the captured Gaussians and fade the originals.

    The copies keep scale, opacity, and color from their sources; the
    returned assignment points at the new copies so later bookkeeping
    (handle tracking, relocation) follows them.
    """
    if not 0.0 < opacity_factor <= 1.0:
        raise ValidationError("opacity_factor must lie in (0, 1]", field="opacity_factor")
    centers_d, rotations_d = deformed
    idx = assignment.union
    if centers_d.shape[0] != idx.size:
        raise ValidationError("deformed arrays must cover exactly the assignment union")

    n0 = len(scene)
    opacities = scene.opacities.copy()
    opacities[idx] *= opacity_factor

    new_scene = GaussianScene(
        centers=np.concatenate([scene.centers, centers_d]),
        scales=np.concatenate([scene.scales, scene.scales[idx]]),
        rotations=np.concatenate([scene.rotations, rotations_d]),
        opacities=np.concatenate([opacities, scene.opacities[idx]]),
        sh_coeffs=np.concatenate([scene.sh_coeffs, scene.sh_coeffs[idx]]),
        sh_degree=scene.sh_degree,
        generation=scene.generation + 1,
    )

    # union position -> index of the appended copy
    copy_of = {int(src): n0 + pos for pos, src in enumerate(idx)}
    per_handle = [
        np.asarray([copy_of[int(j)] for j in lst], dtype=int) for lst in assignment.per_handle
    ]
    new_union = np.arange(n0, n0 + idx.size, dtype=int)
    return new_scene, Assignment(per_handle=per_handle, union=new_union)
