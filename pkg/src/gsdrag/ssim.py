"""Structural similarity with an analytic image gradient.

11x11 Gaussian window, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2 on [0, 1] images.
Windows use zero padding so the map keeps the image size; SSIM(x, x) is
exactly 1 everywhere regardless of padding.
"""

import numpy as np
from scipy.ndimage import correlate1d

C1 = 0.01**2
C2 = 0.03**2
WINDOW = 11
SIGMA = 1.5


def _kernel():
    r = WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / SIGMA) ** 2)
    return k / k.sum()


_K = _kernel()


def _filt(img):
    """Separable windowed mean over the leading two axes (zero boundary)."""
    out = correlate1d(img, _K, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, _K, axis=1, mode="constant", cval=0.0)


def ssim_map(x, y):
    """Per-pixel SSIM map; channels are averaged when present."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mx, my = _filt(x), _filt(y)
    vx = _filt(x * x) - mx * mx
    vy = _filt(y * y) - my * my
    cxy = _filt(x * y) - mx * my
    s = ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
    return s.mean(axis=2) if s.ndim == 3 else s


def ssim(x, y):
    """Mean SSIM over the full image."""
    return float(ssim_map(x, y).mean())


def ssim_map_with_grad(x, y, weight):
    """SSIM map plus d(sum(weight * map)) / dx.

    weight: per-pixel (H, W) upstream weights on the channel-averaged map.
    The adjoint of the zero-padded symmetric window is the window itself.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mx, my = _filt(x), _filt(y)
    vx = _filt(x * x) - mx * mx
    vy = _filt(y * y) - my * my
    cxy = _filt(x * y) - mx * my

    a1 = 2 * mx * my + C1
    a2 = 2 * cxy + C2
    b1 = mx * mx + my * my + C1
    b2 = vx + vy + C2
    s = (a1 * a2) / (b1 * b2)

    g = np.asarray(weight, dtype=np.float64)[:, :, None] / (x.shape[2] if x.ndim == 3 else 1.0)
    if x.ndim == 2:
        g = g[:, :, 0]

    ds_da1 = a2 / (b1 * b2)
    ds_da2 = a1 / (b1 * b2)
    ds_db1 = -s / b1
    ds_db2 = -s / b2

    ds_dmx = g * (2 * my * ds_da1 + 2 * mx * ds_db1)
    ds_dv = g * ds_db2
    ds_dc = g * 2 * ds_da2

    grad = (
        _filt(ds_dmx)
        + 2 * x * _filt(ds_dv)
        - 2 * _filt(ds_dv * mx)
        + y * _filt(ds_dc)
        - _filt(ds_dc * my)
    )
    smap = s.mean(axis=2) if s.ndim == 3 else s
    return smap, grad


def psnr(x, y, mask=None):
    """Peak signal-to-noise ratio on [0, 1] images, optionally masked."""
    diff = (np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)) ** 2
    if mask is not None:
        diff = diff[mask]
    mse = diff.mean()
    if mse == 0.0:
        return float("inf")
    return float(-10.0 * np.log10(mse))
