"""In-memory Gaussian scene model with binary PLY ingestion/persistence.

Storage convention follows the stock splatting checkpoint format: the file
holds pre-activation opacity (logit) and scale (log); in memory those are
activated. Spherical-harmonics coefficients are kept as (N, 3, (deg+1)^2)
with the rest coefficients channel-major on disk.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, PlyParseError, PlySchemaError

SH_C0 = 0.28209479177387814

_REST_COUNTS = {0: 0, 1: 9, 2: 24, 3: 45}


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def inverse_sigmoid(y):
    y = np.asarray(y, dtype=np.float64)
    return np.log(y) - np.log1p(-y)


def dc_to_rgb(sh_dc):
    """Base color of a Gaussian from its DC coefficients, clamped to [0, 1]."""
    return np.clip(0.5 + SH_C0 * np.asarray(sh_dc, dtype=np.float64), 0.0, 1.0)


def rgb_to_dc(rgb):
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


@dataclass
class Gaussian:
    """One element of a GaussianScene (a copy, not a view)."""

    center: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    sh_coeffs: np.ndarray


@dataclass
class GaussianScene:
    """Dense arrays of Gaussian parameters, activations already applied.

    generation is bumped by every structural change (copy-paste, split) so
    per-Gaussian bookkeeping built for an older layout is detectable. The
    renderer caches projections per (generation, camera); geometry arrays
    (centers, scales, rotations) must therefore not be mutated in place --
    build a new scene or copy() first. Opacity and color may mutate freely.
    """

    centers: np.ndarray  # (N, 3)
    scales: np.ndarray  # (N, 3), > 0
    rotations: np.ndarray  # (N, 4), unit, scalar-first
    opacities: np.ndarray  # (N,), in (0, 1)
    sh_coeffs: np.ndarray  # (N, 3, (deg+1)^2)
    sh_degree: int
    generation: int = 0

    def __len__(self):
        return self.centers.shape[0]

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(
            center=self.centers[i].copy(),
            scale=self.scales[i].copy(),
            rotation=self.rotations[i].copy(),
            opacity=float(self.opacities[i]),
            sh_coeffs=self.sh_coeffs[i].copy(),
        )

    @property
    def bbox(self):
        """Axis-aligned bounds of the centers as (min, max) 3-vectors."""
        return self.centers.min(axis=0), self.centers.max(axis=0)

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            centers=self.centers.copy(),
            scales=self.scales.copy(),
            rotations=self.rotations.copy(),
            opacities=self.opacities.copy(),
            sh_coeffs=self.sh_coeffs.copy(),
            sh_degree=self.sh_degree,
            generation=self.generation,
        )


def _expected_properties(sh_degree: int) -> list[str]:
    rest = _REST_COUNTS[sh_degree]
    return (
        ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        + [f"f_rest_{i}" for i in range(rest)]
        + ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    )


def _parse_header(raw: bytes, path) -> tuple[int, list[str], int]:
    """Returns (vertex count, property names, body offset)."""
    end = raw.find(b"end_header\n")
    if end < 0:
        raise PlyParseError(f"{path}: missing end_header")
    header = raw[:end].decode("ascii", errors="replace")
    lines = header.split("\n")
    if not lines or lines[0] != "ply":
        raise PlyParseError(f"{path}: first line must be 'ply', got {lines[0]!r}")
    count = None
    props: list[str] = []
    saw_format = False
    for line in lines[1:]:
        if not line or line.startswith("comment"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if parts[1:] != ["binary_little_endian", "1.0"]:
                raise PlyParseError(f"{path}: unsupported format line {line!r}")
            saw_format = True
        elif parts[0] == "element":
            if count is not None:
                raise PlyParseError(f"{path}: unexpected extra element line {line!r}")
            if len(parts) != 3 or parts[1] != "vertex":
                raise PlyParseError(f"{path}: expected 'element vertex N', got {line!r}")
            try:
                count = int(parts[2])
            except ValueError:
                raise PlyParseError(f"{path}: bad vertex count in {line!r}") from None
        elif parts[0] == "property":
            if len(parts) != 3 or parts[1] != "float":
                raise PlyParseError(f"{path}: expected 'property float NAME', got {line!r}")
            props.append(parts[2])
        else:
            raise PlyParseError(f"{path}: unrecognized header line {line!r}")
    if not saw_format:
        raise PlyParseError(f"{path}: missing format line")
    if count is None:
        raise PlyParseError(f"{path}: missing 'element vertex' line")
    return count, props, end + len(b"end_header\n")


def load_ply(path) -> GaussianScene:
    """Load a splatting checkpoint, applying parameter activations.

    Opacity passes through the logistic function, scale through exp; the
    rotation is renormalized only when it deviates from unit length so
    re-saving a clean file stays byte-stable.
    """
    with open(path, "rb") as f:
        raw = f.read()
    count, props, offset = _parse_header(raw, path)

    rest = len(props) - len(_expected_properties(0))
    degree = next((d for d, r in _REST_COUNTS.items() if r == rest), None)
    if degree is None:
        raise PlySchemaError(f"{path}: {max(rest, 0)} f_rest properties do not match any SH degree 0..3")
    expected = _expected_properties(degree)
    if props != expected:
        missing = [p for p in expected if p not in props]
        if missing:
            raise PlySchemaError(f"{path}: missing required property {missing[0]!r}")
        raise PlySchemaError(f"{path}: properties out of order, expected {expected[:4]}...")

    n_props = len(props)
    body = raw[offset : offset + 4 * n_props * count]
    if len(body) != 4 * n_props * count:
        raise PlyParseError(f"{path}: body truncated, expected {4 * n_props * count} bytes")
    data = np.frombuffer(body, dtype="<f4").reshape(count, n_props).astype(np.float64)

    bad = ~np.isfinite(data)
    if bad.any():
        idx = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise DataError(f"{path}: non-finite value in element {idx}")

    centers = data[:, 0:3]
    dc = data[:, 6:9]
    rest_vals = data[:, 9 : 9 + _REST_COUNTS[degree]]
    opac_raw = data[:, 9 + _REST_COUNTS[degree]]
    scale_raw = data[:, 10 + _REST_COUNTS[degree] : 13 + _REST_COUNTS[degree]]
    rot = data[:, 13 + _REST_COUNTS[degree] : 17 + _REST_COUNTS[degree]].copy()

    norms = np.linalg.norm(rot, axis=1)
    if np.any(norms == 0.0):
        idx = int(np.argwhere(norms == 0.0)[0, 0])
        raise DataError(f"{path}: zero-norm rotation in element {idx}")
    off_unit = np.abs(norms - 1.0) > 1e-6
    rot[off_unit] /= norms[off_unit, None]

    coeffs = (degree + 1) ** 2
    sh = np.zeros((count, 3, coeffs))
    sh[:, :, 0] = dc
    if coeffs > 1:
        sh[:, :, 1:] = rest_vals.reshape(count, 3, coeffs - 1)

    return GaussianScene(
        centers=centers.copy(),
        scales=np.exp(scale_raw),
        rotations=rot,
        opacities=sigmoid(opac_raw),
        sh_coeffs=sh,
        sh_degree=degree,
    )


def save_ply(scene: GaussianScene, path) -> None:
    """Persist a scene with inverse activations, loadable by stock viewers."""
    n = len(scene)
    if n == 0:
        raise ValueError("cannot save an empty scene")
    props = _expected_properties(scene.sh_degree)
    rest = _REST_COUNTS[scene.sh_degree]

    data = np.zeros((n, len(props)), dtype=np.float64)
    data[:, 0:3] = scene.centers
    data[:, 6:9] = scene.sh_coeffs[:, :, 0]
    if rest:
        data[:, 9 : 9 + rest] = scene.sh_coeffs[:, :, 1:].reshape(n, rest)
    data[:, 9 + rest] = inverse_sigmoid(scene.opacities)
    data[:, 10 + rest : 13 + rest] = np.log(scene.scales)
    data[:, 13 + rest : 17 + rest] = scene.rotations

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in props]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(data.astype("<f4").tobytes())
