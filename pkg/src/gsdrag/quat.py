"""Quaternion helpers (scalar-first convention, numpy arrays)."""

import numpy as np

from .errors import DegenerateDirectionError

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise DegenerateDirectionError("cannot normalize a zero quaternion")
    return q / n


def multiply(q1, q2):
    """Hamilton product q1 ⊗ q2. Broadcasts over leading axes."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    w1, x1, y1, z1 = np.moveaxis(q1, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(q2, -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def rotate(q, v):
    """Apply the rotation encoded by unit quaternion q to vector v (sandwich product)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    qv = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    conj = q * np.array([1.0, -1.0, -1.0, -1.0])
    return multiply(multiply(q, qv), conj)[..., 1:]


def to_matrix(q):
    """Rotation matrices for unit quaternions, shape (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def rotation_between(vh, vt):
    """Shortest-arc unit quaternion mapping direction vh onto direction vt.

    Antiparallel inputs rotate by pi about a fixed axis orthogonal to vh,
    chosen by crossing vh with the least-aligned coordinate axis
    (deterministic tie-break).
    """
    vh = np.asarray(vh, dtype=np.float64)
    vt = np.asarray(vt, dtype=np.float64)
    nh = np.linalg.norm(vh)
    nt = np.linalg.norm(vt)
    if nh == 0.0 or nt == 0.0:
        raise DegenerateDirectionError("rotation between zero-length directions is undefined")
    a = vh / nh
    b = vt / nt
    d = float(np.dot(a, b))
    c = np.cross(a, b)
    # [1 + dot, cross] halves the angle of the raw [dot, cross] quaternion,
    # giving the shortest arc; near d = -1 it cancels, so fall back to a
    # pi rotation about an orthogonal axis.
    if 1.0 + d < 1e-14:
        e = np.zeros(3)
        e[np.argmin(np.abs(a))] = 1.0
        axis = np.cross(a, e)
        axis /= np.linalg.norm(axis)
        return np.concatenate([[0.0], axis])
    return normalize(np.concatenate([[1.0 + d], c]))


def blend(quats, weights):
    """Weighted normalized linear blend with hemisphere alignment.

    Flips any quaternion whose dot with the first is negative before the
    weighted sum, then renormalizes (nlerp-style blend).
    """
    quats = np.asarray(quats, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    signs = np.where(quats @ quats[0] < 0.0, -1.0, 1.0)
    return normalize((weights * signs) @ quats)
