"""CPU tile-based forward splatting: RGB, scalar-payload, and depth images,
plus pixel picking. Front-to-back alpha compositing over a global depth sort."""

import json
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import quat
from .errors import ContractError, ValidationError
from .scene import GaussianScene, dc_to_rgb

NEAR_PLANE = 0.2
COV2D_FLOOR = 0.3  # low-pass floor added to the projected covariance diagonal
ALPHA_CLAMP = 0.99
ALPHA_SKIP = 1.0 / 255.0
TRANSMITTANCE_STOP = 1e-4
TILE = 16


@dataclass
class Camera:
    """Pinhole view: world-to-camera rigid transform plus intrinsics."""

    w2c: np.ndarray  # (4, 4)
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    cam_id: str = "cam"

    def __post_init__(self):
        self.w2c = np.asarray(self.w2c, dtype=np.float64).reshape(4, 4)
        R = self.w2c[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-5):
            raise ValidationError(f"camera {self.cam_id}: rotation block not orthonormal")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"camera {self.cam_id}: focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"camera {self.cam_id}: image size must be >= 1")

    def resized(self, width: int, height: int) -> "Camera":
        """Same view at a different resolution (intrinsics scaled)."""
        sx, sy = width / self.width, height / self.height
        return Camera(
            w2c=self.w2c.copy(),
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=self.cx * sx,
            cy=self.cy * sy,
            width=width,
            height=height,
            cam_id=self.cam_id,
        )

    def to_json(self) -> dict:
        return {
            "id": self.cam_id,
            "w2c": [float(v) for v in self.w2c.reshape(-1)],
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


def load_cameras(path) -> list[Camera]:
    with open(path) as f:
        doc = json.load(f)
    cams = []
    for i, c in enumerate(doc.get("cameras", [])):
        try:
            cams.append(
                Camera(
                    w2c=np.asarray(c["w2c"], dtype=np.float64).reshape(4, 4),
                    fx=float(c["fx"]),
                    fy=float(c["fy"]),
                    cx=float(c["cx"]),
                    cy=float(c["cy"]),
                    width=int(c["width"]),
                    height=int(c["height"]),
                    cam_id=str(c["id"]),
                )
            )
        except KeyError as e:
            raise ValidationError(f"camera entry {i} missing {e}", field=f"cameras[{i}]") from e
    return cams


def save_cameras(cams: list[Camera], path) -> None:
    with open(path, "w") as f:
        json.dump({"cameras": [c.to_json() for c in cams]}, f, indent=1)


@dataclass
class RenderedImage:
    pixels: np.ndarray  # (H, W, 3) in [0, 1]
    view_id: str


@dataclass
class DepthMap:
    depth: np.ndarray  # (H, W), camera-z units
    validity: np.ndarray  # (H, W) bool


@dataclass
class Projected:
    """Screen-space splats surviving culling, sorted front to back."""

    index: np.ndarray  # original element index, (M,)
    mean2d: np.ndarray  # (M, 2)
    conic: np.ndarray  # (M, 3): inverse covariance (a, b, c) for [[a,b],[b,c]]
    depth: np.ndarray  # (M,)
    alpha: np.ndarray  # (M,)
    radius: np.ndarray  # (M, 2) 3-sigma half extents in pixels


def project_gaussian(g, cam: Camera):
    """Project one Gaussian; returns (mean2d, cov2d, depth) or None when culled."""
    proj = project_scene(
        GaussianScene(
            centers=g.center[None],
            scales=g.scale[None],
            rotations=g.rotation[None],
            opacities=np.asarray([g.opacity]),
            sh_coeffs=g.sh_coeffs[None],
            sh_degree=0,
        ),
        cam,
        return_cov=True,
    )
    if proj is None:
        return None
    mean2d, cov2d, depth = proj
    return mean2d[0], cov2d[0], float(depth[0])


def _project_arrays(scene: GaussianScene, cam: Camera):
    R = cam.w2c[:3, :3]
    t = cam.w2c[:3, 3]
    p = scene.centers @ R.T + t
    z = p[:, 2]
    vis = z > NEAR_PLANE

    mean2d = np.empty((len(scene), 2))
    mean2d[:, 0] = np.where(vis, cam.fx * p[:, 0] / np.where(vis, z, 1.0) + cam.cx, 0.0)
    mean2d[:, 1] = np.where(vis, cam.fy * p[:, 1] / np.where(vis, z, 1.0) + cam.cy, 0.0)

    Rg = quat.to_matrix(scene.rotations)
    M = Rg * scene.scales[:, None, :]
    cov3d = M @ M.transpose(0, 2, 1)

    zs = np.where(vis, z, 1.0)
    J = np.zeros((len(scene), 2, 3))
    J[:, 0, 0] = cam.fx / zs
    J[:, 0, 2] = -cam.fx * p[:, 0] / zs**2
    J[:, 1, 1] = cam.fy / zs
    J[:, 1, 2] = -cam.fy * p[:, 1] / zs**2

    JW = J @ R
    cov2d = JW @ cov3d @ JW.transpose(0, 2, 1)
    cov2d[:, 0, 0] += COV2D_FLOOR
    cov2d[:, 1, 1] += COV2D_FLOOR

    radius = 3.0 * np.sqrt(np.stack([cov2d[:, 0, 0], cov2d[:, 1, 1]], axis=1))
    on_screen = (
        (mean2d[:, 0] + radius[:, 0] > 0.0)
        & (mean2d[:, 0] - radius[:, 0] < cam.width)
        & (mean2d[:, 1] + radius[:, 1] > 0.0)
        & (mean2d[:, 1] - radius[:, 1] < cam.height)
    )
    return p, z, mean2d, cov2d, radius, vis & on_screen


def project_scene(scene: GaussianScene, cam: Camera, return_cov: bool = False):
    """Cull and sort the whole scene for one view; None when nothing survives."""
    _, z, mean2d, cov2d, radius, keep = _project_arrays(scene, cam)
    if return_cov:
        if not keep.any():
            return None
        return mean2d[keep], cov2d[keep], z[keep]
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return None
    order = idx[np.argsort(z[idx], kind="stable")]  # stable: depth ties keep element order

    c2 = cov2d[order]
    det = c2[:, 0, 0] * c2[:, 1, 1] - c2[:, 0, 1] ** 2
    conic = np.stack([c2[:, 1, 1] / det, -c2[:, 0, 1] / det, c2[:, 0, 0] / det], axis=1)
    return Projected(
        index=order,
        mean2d=mean2d[order],
        conic=conic,
        depth=z[order],
        alpha=scene.opacities[order].astype(np.float64),
        radius=radius[order],
    )


def _projected_with_bins(scene: GaussianScene, cam: Camera):
    """Projection + tile binning, cached on the scene per (generation,
    camera). Valid because geometry edits bump the generation; opacity and
    color mutations don't move splats, so alpha is re-gathered per call."""
    key = (scene.generation, cam.cam_id, cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy)
    cache = getattr(scene, "_geom_cache", None)
    if cache is None:
        cache = {}
        scene._geom_cache = cache
    entry = cache.get(key)
    if entry is None:
        proj = project_scene(scene, cam)
        bins = None if proj is None else _bin_tiles(proj, cam.width, cam.height)
        cache[key] = entry = (proj, bins)
    proj, bins = entry
    if proj is not None:
        proj.alpha = scene.opacities[proj.index].astype(np.float64)
    return proj, bins


def _bin_tiles(proj: Projected, width: int, height: int):
    """CSR tile lists: for each tile, the depth-ordered splat rows whose
    3-sigma footprint AABB intersects it."""
    tiles_x = (width + TILE - 1) // TILE
    tiles_y = (height + TILE - 1) // TILE
    n_tiles = tiles_x * tiles_y

    tx0 = np.clip(((proj.mean2d[:, 0] - proj.radius[:, 0]) // TILE).astype(np.int64), 0, tiles_x - 1)
    tx1 = np.clip(((proj.mean2d[:, 0] + proj.radius[:, 0]) // TILE).astype(np.int64), 0, tiles_x - 1)
    ty0 = np.clip(((proj.mean2d[:, 1] - proj.radius[:, 1]) // TILE).astype(np.int64), 0, tiles_y - 1)
    ty1 = np.clip(((proj.mean2d[:, 1] + proj.radius[:, 1]) // TILE).astype(np.int64), 0, tiles_y - 1)

    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    counts = nx * ny
    total = int(counts.sum())
    rows = np.repeat(np.arange(counts.size, dtype=np.int64), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    within = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    kx = within % np.repeat(nx, counts)
    ky = within // np.repeat(nx, counts)
    tile_id = (np.repeat(ty0, counts) + ky) * tiles_x + np.repeat(tx0, counts) + kx

    # stable sort by tile keeps rows in depth order inside each tile
    order = np.argsort(tile_id, kind="stable")
    flat = rows[order]
    offsets = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(np.bincount(tile_id, minlength=n_tiles), out=offsets[1:])
    return offsets, flat, tiles_x, tiles_y


@njit(cache=True)
def _forward_kernel(
    offsets,
    flat,
    tiles_x,
    tiles_y,
    mean2d,
    conic,
    radius,
    opacity,
    payload,
    background,
    width,
    height,
):
    n_channels = payload.shape[1]
    image = np.empty((height, width, n_channels))
    accum = np.zeros((height, width))
    for tile in range(tiles_x * tiles_y):
        ty = tile // tiles_x
        tx = tile - ty * tiles_x
        x_end = min((tx + 1) * TILE, width)
        y_end = min((ty + 1) * TILE, height)
        start, end = offsets[tile], offsets[tile + 1]
        for py in range(ty * TILE, y_end):
            y = py + 0.5
            for px in range(tx * TILE, x_end):
                x = px + 0.5
                transmittance = 1.0
                acc_alpha = 0.0
                for c in range(n_channels):
                    image[py, px, c] = 0.0
                for k in range(start, end):
                    g = flat[k]
                    dx = x - mean2d[g, 0]
                    dy = y - mean2d[g, 1]
                    if abs(dx) > radius[g, 0] or abs(dy) > radius[g, 1]:
                        continue
                    power = -0.5 * (conic[g, 0] * dx * dx + conic[g, 2] * dy * dy) - conic[g, 1] * dx * dy
                    if power > 0.0:
                        power = 0.0
                    a = opacity[g] * np.exp(power)
                    if a > ALPHA_CLAMP:
                        a = ALPHA_CLAMP
                    if a < ALPHA_SKIP:
                        continue
                    test_t = transmittance * (1.0 - a)
                    if test_t < TRANSMITTANCE_STOP:
                        break
                    w = a * transmittance
                    for c in range(n_channels):
                        image[py, px, c] += w * payload[g, c]
                    acc_alpha += w
                    transmittance = test_t
                for c in range(n_channels):
                    image[py, px, c] += transmittance * background[c]
                accum[py, px] = acc_alpha
    return image, accum


@njit(cache=True)
def _backward_kernel(
    offsets,
    flat,
    tiles_x,
    tiles_y,
    mean2d,
    conic,
    radius,
    opacity,
    payload,
    background,
    dl_dpix,
    width,
    height,
):
    n_splats = mean2d.shape[0]
    n_channels = payload.shape[1]
    d_payload = np.zeros((n_splats, n_channels))
    d_alpha = np.zeros(n_splats)
    for tile in range(tiles_x * tiles_y):
        ty = tile // tiles_x
        tx = tile - ty * tiles_x
        x_end = min((tx + 1) * TILE, width)
        y_end = min((ty + 1) * TILE, height)
        start, end = offsets[tile], offsets[tile + 1]
        for py in range(ty * TILE, y_end):
            y = py + 0.5
            for px in range(tx * TILE, x_end):
                x = px + 0.5
                # forward scan: find the stop point and final transmittance
                transmittance = 1.0
                last = -1
                for k in range(start, end):
                    g = flat[k]
                    dx = x - mean2d[g, 0]
                    dy = y - mean2d[g, 1]
                    if abs(dx) > radius[g, 0] or abs(dy) > radius[g, 1]:
                        continue
                    power = -0.5 * (conic[g, 0] * dx * dx + conic[g, 2] * dy * dy) - conic[g, 1] * dx * dy
                    if power > 0.0:
                        power = 0.0
                    a = opacity[g] * np.exp(power)
                    if a > ALPHA_CLAMP:
                        a = ALPHA_CLAMP
                    if a < ALPHA_SKIP:
                        continue
                    test_t = transmittance * (1.0 - a)
                    if test_t < TRANSMITTANCE_STOP:
                        break
                    transmittance = test_t
                    last = k
                # reverse scan: rebuild per-splat transmittance and the
                # color composited behind each splat
                suffix = np.empty(n_channels)
                for c in range(n_channels):
                    suffix[c] = transmittance * background[c]
                t_after = transmittance
                for k in range(last, start - 1, -1):
                    g = flat[k]
                    dx = x - mean2d[g, 0]
                    dy = y - mean2d[g, 1]
                    if abs(dx) > radius[g, 0] or abs(dy) > radius[g, 1]:
                        continue
                    power = -0.5 * (conic[g, 0] * dx * dx + conic[g, 2] * dy * dy) - conic[g, 1] * dx * dy
                    if power > 0.0:
                        power = 0.0
                    falloff = np.exp(power)
                    a = opacity[g] * falloff
                    if a > ALPHA_CLAMP:
                        a = ALPHA_CLAMP
                    if a < ALPHA_SKIP:
                        continue
                    t_excl = t_after / (1.0 - a)
                    w = a * t_excl
                    da = 0.0
                    for c in range(n_channels):
                        g_up = dl_dpix[py, px, c]
                        d_payload[g, c] += w * g_up
                        da += g_up * (t_excl * payload[g, c] - suffix[c] / (1.0 - a))
                        suffix[c] += w * payload[g, c]
                    if a < ALPHA_CLAMP:
                        d_alpha[g] += da * falloff
                    t_after = t_excl
    return d_payload, d_alpha


def rasterize_payload(scene: GaussianScene, cam: Camera, payload, background):
    """Front-to-back composite an arbitrary per-Gaussian payload.

    payload: (N, C); background: (C,). Returns (image (H, W, C),
    accumulated alpha (H, W)).
    """
    payload = np.atleast_2d(np.asarray(payload, dtype=np.float64).T).T
    background = np.atleast_1d(np.asarray(background, dtype=np.float64))
    H, W, C = cam.height, cam.width, payload.shape[1]

    proj, bins = _projected_with_bins(scene, cam)
    if proj is None:
        image = np.empty((H, W, C))
        image[:] = background
        return image, np.zeros((H, W))

    offsets, flat, tiles_x, tiles_y = bins
    return _forward_kernel(
        offsets,
        flat,
        tiles_x,
        tiles_y,
        proj.mean2d,
        proj.conic,
        proj.radius,
        proj.alpha,
        np.ascontiguousarray(payload[proj.index]),
        background,
        W,
        H,
    )


def rasterize_rgb(scene: GaussianScene, cam: Camera, background=(0.0, 0.0, 0.0)) -> RenderedImage:
    colors = dc_to_rgb(scene.sh_coeffs[:, :, 0])
    image, _ = rasterize_payload(scene, cam, colors, background)
    return RenderedImage(pixels=np.clip(image, 0.0, 1.0), view_id=cam.cam_id)


def rasterize_scalar(scene: GaussianScene, cam: Camera, per_gaussian_value) -> np.ndarray:
    values = np.asarray(per_gaussian_value, dtype=np.float64)
    if values.shape != (len(scene),):
        raise ContractError(
            f"payload length {values.shape} does not match scene size {len(scene)}"
        )
    image, _ = rasterize_payload(scene, cam, values[:, None], np.zeros(1))
    return image[:, :, 0]


def rasterize_depth(scene: GaussianScene, cam: Camera, validity_threshold: float = 0.5) -> DepthMap:
    """Alpha-weighted expected depth; pixels below the accumulation
    threshold are flagged invalid."""
    _, z, *_ = _project_arrays(scene, cam)
    image, accum = rasterize_payload(scene, cam, z[:, None], np.zeros(1))
    safe = np.maximum(accum, 1e-12)
    depth = np.where(accum > 0.0, image[:, :, 0] / safe, 0.0)
    return DepthMap(depth=depth, validity=accum >= validity_threshold)


def pick(scene: GaussianScene, cam: Camera, px):
    """Unproject a pixel to a world point via expected depth; None when the
    pixel has insufficient accumulated alpha."""
    x, y = int(px[0]), int(px[1])
    if not (0 <= x < cam.width and 0 <= y < cam.height):
        raise ContractError(f"pixel ({x}, {y}) outside viewport {cam.width}x{cam.height}")
    dm = rasterize_depth(scene, cam)
    if not dm.validity[y, x]:
        return None
    z = dm.depth[y, x]
    p_cam = np.array(
        [(x + 0.5 - cam.cx) / cam.fx * z, (y + 0.5 - cam.cy) / cam.fy * z, z]
    )
    R = cam.w2c[:3, :3]
    t = cam.w2c[:3, 3]
    return R.T @ (p_cam - t)


def project_point(cam: Camera, point) -> np.ndarray:
    """World point to pixel coordinates (pixel-center convention)."""
    p = cam.w2c[:3, :3] @ np.asarray(point, dtype=np.float64) + cam.w2c[:3, 3]
    return np.array(
        [cam.fx * p[0] / p[2] + cam.cx - 0.5, cam.fy * p[1] / p[2] + cam.cy - 0.5]
    )


def backprop_pixel_grad(scene: GaussianScene, cam: Camera, background, dl_dpix):
    """Gradient of a pixel-space loss through the compositing chain.

    dl_dpix: (H, W, 3) upstream gradient on the rendered (unclipped) image.
    Returns (d_color (N, 3), d_alpha (N,)): derivatives with respect to each
    Gaussian's composited color and activated opacity. Splats cut by the
    clamp, skip, or transmittance stop get zero gradient, matching the
    forward's piecewise definition.
    """
    background = np.asarray(background, dtype=np.float64)
    d_color = np.zeros((len(scene), 3))
    d_alpha = np.zeros(len(scene))

    proj, bins = _projected_with_bins(scene, cam)
    if proj is None:
        return d_color, d_alpha
    colors = dc_to_rgb(scene.sh_coeffs[:, :, 0])[proj.index]

    offsets, flat, tiles_x, tiles_y = bins
    d_payload, d_alpha_rows = _backward_kernel(
        offsets,
        flat,
        tiles_x,
        tiles_y,
        proj.mean2d,
        proj.conic,
        proj.radius,
        proj.alpha,
        np.ascontiguousarray(colors),
        background,
        np.ascontiguousarray(dl_dpix),
        cam.width,
        cam.height,
    )
    d_color[proj.index] = d_payload
    d_alpha[proj.index] = d_alpha_rows
    return d_color, d_alpha
