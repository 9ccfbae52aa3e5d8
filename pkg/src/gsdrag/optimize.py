"""Masked composite image loss, analytic color/opacity gradients through the
compositing chain, the adaptive parameter step, and the split primitive."""

from dataclasses import dataclass

import numpy as np

from . import ssim
from .errors import ContractError
from .mask import EditState, Mask2D
from .render import Camera, RenderedImage, backprop_pixel_grad, rasterize_payload
from .scene import SH_C0, GaussianScene, dc_to_rgb

DEFAULT_LR_COLOR = 0.0125
DEFAULT_LR_OPACITY = 0.05
STEPS_PER_PASS = 30
OPACITY_CLAMP = (1e-4, 0.9999)
SPLIT_SCALE_FACTOR = 1.6
SPLIT_OFFSET = 0.5


@dataclass
class LossWeights:
    lambda_l1: float = 8.0
    lambda_ssim: float = 2.0
    lambda_perc: float = 1.0
    perceptual: str = "l1"  # "l1" or "l1_multiscale"

    def validate(self):
        if min(self.lambda_l1, self.lambda_ssim, self.lambda_perc) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.perceptual not in ("l1", "l1_multiscale"):
            raise ValueError(f"unknown perceptual proxy {self.perceptual!r}")


@dataclass
class ViewTarget:
    """Ground truths for one view: original render for the background,
    corrected render for the edited region, and the region mask."""

    original: np.ndarray  # (H, W, 3)
    edited: np.ndarray  # (H, W, 3)
    mask: Mask2D
    view_id: str


@dataclass
class LossTerms:
    total: float
    l1: float
    ssim: float
    perc: float


def _boxdown(img):
    """2x2 box downsample; odd trailing rows/cols are cropped."""
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    c = img[:h, :w]
    return 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])


def _boxup(grad, shape):
    """Adjoint of _boxdown back to `shape` (cropped cells get zero)."""
    out = np.zeros(shape)
    h, w = grad.shape[0] * 2, grad.shape[1] * 2
    for dy in (0, 1):
        for dx in (0, 1):
            out[dy:h:2, dx:w:2] = 0.25 * grad
    return out


def _perc_l1(rendered, edited, inside, multiscale, want_grad):
    """Weighted-mean L1 pyramid between the render and the edited target.

    inside: float weights (the 2D mask). Each scale contributes a weighted
    mean of per-pixel channel-mean absolute differences.
    """
    scales = 3 if multiscale else 1
    xs, ys, ws = [rendered], [edited], [np.asarray(inside, dtype=np.float64)]
    for _ in range(scales - 1):
        xs.append(_boxdown(xs[-1]))
        ys.append(_boxdown(ys[-1]))
        ws.append(_boxdown(ws[-1]))
    value = 0.0
    grads = []
    for x, y, w in zip(xs, ys, ws):
        denom = w.sum() * x.shape[2]
        if denom > 0.0:
            value += np.sum(w[:, :, None] * np.abs(x - y)) / denom / scales
            if want_grad:
                grads.append(np.sign(x - y) * w[:, :, None] / denom / scales)
        elif want_grad:
            grads.append(np.zeros_like(x))
    if not want_grad:
        return value, None
    g = grads[-1]
    for lower in reversed(grads[:-1]):
        g = lower + _boxup(g, lower.shape)
    return value, g


def _loss_and_pixel_grad(rendered, target: ViewTarget, w: LossWeights, want_grad: bool):
    inside = target.mask.bits
    outside = ~inside
    n_out = int(outside.sum())

    grad = np.zeros_like(rendered) if want_grad else None

    l1_term = 0.0
    ssim_term = 0.0
    if n_out > 0:
        diff = rendered - target.original
        l1_term = float(np.abs(diff)[outside].mean())
        if want_grad:
            grad += (
                w.lambda_l1 * np.sign(diff) * outside[:, :, None] / (n_out * rendered.shape[2])
            )
            smap, sgrad = ssim.ssim_map_with_grad(
                rendered, target.original, -w.lambda_ssim * outside / n_out
            )
            grad += sgrad
        else:
            smap = ssim.ssim_map(rendered, target.original)
        ssim_term = float(1.0 - smap[outside].mean())

    perc_term, perc_grad = _perc_l1(
        rendered,
        target.edited,
        inside.astype(np.float64),
        multiscale=w.perceptual == "l1_multiscale",
        want_grad=want_grad,
    )
    if want_grad and perc_grad is not None:
        grad += w.lambda_perc * perc_grad

    total = w.lambda_l1 * l1_term + w.lambda_ssim * ssim_term + w.lambda_perc * perc_term
    return LossTerms(total=total, l1=l1_term, ssim=ssim_term, perc=perc_term), grad


def loss_eval(rendered, target: ViewTarget, w: LossWeights) -> LossTerms:
    """Composite masked loss: L1 + SSIM against the original outside the
    mask, perceptual proxy against the edited image inside it. A fully
    true or fully false mask simply zeroes the vacated term."""
    pixels = rendered.pixels if isinstance(rendered, RenderedImage) else np.asarray(rendered)
    if pixels.shape[:2] != target.mask.bits.shape:
        raise ContractError("rendered image and mask dimensions differ")
    terms, _ = _loss_and_pixel_grad(pixels, target, w, want_grad=False)
    return terms


def grad_color_opacity(
    scene: GaussianScene,
    cam: Camera,
    target: ViewTarget,
    w: LossWeights,
    editable=None,
    background=(0.0, 0.0, 0.0),
):
    """Analytic loss gradient for each Gaussian's DC color and opacity.

    Returns (d_dc (N, 3), d_opacity (N,), terms). Frozen (non-editable)
    Gaussians get exactly zero gradient.
    """
    image, _ = _render_unclipped(scene, cam, background)
    terms, dl_dpix = _loss_and_pixel_grad(image, target, w, want_grad=True)
    d_color, d_opacity = backprop_pixel_grad(scene, cam, background, dl_dpix)

    rgb = dc_to_rgb(scene.sh_coeffs[:, :, 0])
    interior = (rgb > 0.0) & (rgb < 1.0)  # clamp subgradient
    d_dc = d_color * SH_C0 * interior

    if editable is not None:
        frozen = ~np.asarray(editable, dtype=bool)
        d_dc[frozen] = 0.0
        d_opacity[frozen] = 0.0
    return d_dc, d_opacity, terms


def _render_unclipped(scene, cam, background):
    colors = dc_to_rgb(scene.sh_coeffs[:, :, 0])
    return rasterize_payload(scene, cam, colors, np.asarray(background, dtype=np.float64))


class MaskedAdam:
    """First/second-moment adaptive updates on DC color and opacity,
    restricted to editable Gaussians."""

    def __init__(self, n: int, lr_color=DEFAULT_LR_COLOR, lr_opacity=DEFAULT_LR_OPACITY):
        self.lr_color = lr_color
        self.lr_opacity = lr_opacity
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.eps = 1e-15
        self.t = 0
        self.m_dc = np.zeros((n, 3))
        self.v_dc = np.zeros((n, 3))
        self.m_op = np.zeros(n)
        self.v_op = np.zeros(n)

    def step(self, scene: GaussianScene, d_dc, d_opacity, editable) -> GaussianScene:
        """In-place update; opacity re-clamped to (1e-4, 0.9999)."""
        editable = np.asarray(editable, dtype=bool)
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t

        self.m_dc = self.beta1 * self.m_dc + (1 - self.beta1) * d_dc
        self.v_dc = self.beta2 * self.v_dc + (1 - self.beta2) * d_dc**2
        upd = self.lr_color * (self.m_dc / bc1) / (np.sqrt(self.v_dc / bc2) + self.eps)
        scene.sh_coeffs[editable, :, 0] -= upd[editable]

        self.m_op = self.beta1 * self.m_op + (1 - self.beta1) * d_opacity
        self.v_op = self.beta2 * self.v_op + (1 - self.beta2) * d_opacity**2
        upd_op = self.lr_opacity * (self.m_op / bc1) / (np.sqrt(self.v_op / bc2) + self.eps)
        scene.opacities[editable] = np.clip(
            scene.opacities[editable] - upd_op[editable], *OPACITY_CLAMP
        )
        return scene


def select_split_indices(scene: GaussianScene, state: EditState, percentile=99.0) -> np.ndarray:
    """Default densification policy: editable Gaussians whose largest scale
    exceeds the given percentile of editable largest scales."""
    editable = np.flatnonzero(state.editable)
    if editable.size == 0:
        return editable
    largest = scene.scales[editable].max(axis=1)
    cut = np.percentile(largest, percentile)
    return editable[largest > cut]


def split_gaussians(scene: GaussianScene, state: EditState, indices):
    """Replace each listed Gaussian with two children along its largest
    principal axis; children inherit the parent's mask and handle tracking.

    Child opacity solves 1 - (1 - a)^2 = parent alpha so the stacked pair
    composites to roughly the parent's coverage.
    """
    from . import quat

    state.check(scene)
    indices = np.asarray(indices, dtype=int)
    if indices.size == 0:
        return scene, state
    if not state.editable[indices].all():
        bad = indices[~state.editable[indices]][0]
        raise ContractError(f"cannot split non-editable gaussian {bad}")

    R = quat.to_matrix(scene.rotations[indices])
    axis_idx = np.argmax(scene.scales[indices], axis=1)
    axes = R[np.arange(indices.size), :, axis_idx]
    offsets = SPLIT_OFFSET * scene.scales[indices, axis_idx][:, None] * axes

    child_centers = np.concatenate(
        [scene.centers[indices] + offsets, scene.centers[indices] - offsets]
    )
    child_scales = np.tile(scene.scales[indices] / SPLIT_SCALE_FACTOR, (2, 1))
    child_rot = np.tile(scene.rotations[indices], (2, 1))
    child_alpha = 1.0 - np.sqrt(np.maximum(1.0 - scene.opacities[indices], 0.0))
    child_alpha = np.tile(np.clip(child_alpha, *OPACITY_CLAMP), 2)
    child_sh = np.concatenate([scene.sh_coeffs[indices]] * 2)

    keep = np.ones(len(scene), dtype=bool)
    keep[indices] = False

    new_scene = GaussianScene(
        centers=np.concatenate([scene.centers[keep], child_centers]),
        scales=np.concatenate([scene.scales[keep], child_scales]),
        rotations=np.concatenate([scene.rotations[keep], child_rot]),
        opacities=np.concatenate([scene.opacities[keep], child_alpha]),
        sh_coeffs=np.concatenate([scene.sh_coeffs[keep], child_sh]),
        sh_degree=scene.sh_degree,
        generation=scene.generation + 1,
    )

    kept_handles = [list(h) for h, k in zip(state.handle_of, keep) if k]
    child_handles = [list(state.handle_of[int(i)]) for i in indices] * 2
    new_state = EditState(
        editable=np.concatenate([state.editable[keep], np.tile(state.editable[indices], 2)]),
        handle_of=kept_handles + child_handles,
        generation=new_scene.generation,
    )
    return new_scene, new_state
