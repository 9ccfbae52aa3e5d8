"""View correction protocol: identity and mock correctors in-process, plus
the HTTP client for an external corrector sidecar."""

import io
import zlib
from dataclasses import dataclass

import numpy as np
import requests
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import CorrectorError, ValidationError

DEFAULT_TIMEOUT = 120.0


@dataclass
class CorrectorHandle:
    kind: str  # identity | mock | external
    endpoint: str = ""
    seed: int = 0
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.kind not in ("identity", "mock", "external"):
            raise ValidationError(f"unknown corrector kind {self.kind!r}", field="corrector.kind")
        if self.kind == "external" and not self.endpoint:
            raise ValidationError("external corrector needs an endpoint", field="corrector.endpoint")


def encode_png(pixels: np.ndarray) -> bytes:
    arr = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def _mock_correct(image, strength, view_id, seed):
    """Deterministic stand-in correction: blur at the requested strength,
    unsharp-mask, and add seeded per-view noise. Exists to exercise the
    plumbing, not to look good."""
    sigma = 4.0 * strength
    blurred = np.stack([gaussian_filter(image[:, :, c], sigma) for c in range(3)], axis=2)
    rebl = np.stack([gaussian_filter(blurred[:, :, c], sigma) for c in range(3)], axis=2)
    sharp = blurred + 0.5 * (blurred - rebl)
    salt = zlib.crc32(f"{view_id}:{strength:.6f}".encode())
    rng = np.random.default_rng((seed << 32) ^ salt)
    noise = rng.normal(0.0, 0.01 * strength, image.shape)
    return np.clip(sharp + noise, 0.0, 1.0)


def check_health(handle: CorrectorHandle) -> None:
    """Raises CorrectorError when an external endpoint is not answering."""
    if handle.kind != "external":
        return
    try:
        r = requests.get(handle.endpoint.rstrip("/") + "/health", timeout=10.0)
    except requests.RequestException as e:
        raise CorrectorError(f"corrector unreachable: {e}") from e
    if r.status_code != 200:
        raise CorrectorError(f"corrector health check returned {r.status_code}")


def correct_view(
    handle: CorrectorHandle,
    image: np.ndarray,
    strength: float,
    view_id: str,
    interval: int = 0,
    pass_index: int = 0,
) -> np.ndarray:
    """One view through the corrector at the given annealed strength."""
    if not 0.0 < strength <= 1.0:
        raise ValidationError(f"strength must lie in (0, 1], got {strength}")
    if handle.kind == "identity":
        return image.copy()
    if handle.kind == "mock":
        return _mock_correct(image, strength, view_id, handle.seed)

    headers = {
        "X-Strength": format(strength, "g"),
        "X-View-Id": str(view_id),
        "X-Interval": str(interval),
        "X-Pass": str(pass_index),
        "Content-Type": "image/png",
    }
    try:
        r = requests.post(
            handle.endpoint.rstrip("/") + "/correct",
            data=encode_png(image),
            headers=headers,
            timeout=handle.timeout,
        )
    except requests.RequestException as e:
        raise CorrectorError(f"corrector unreachable: {e}") from e
    if r.status_code != 200:
        raise CorrectorError(f"corrector returned {r.status_code}")
    out = decode_png(r.content)
    if out.shape != image.shape:
        raise CorrectorError(
            f"corrector returned {out.shape[1]}x{out.shape[0]}, "
            f"expected {image.shape[1]}x{image.shape[0]}"
        )
    return out


def notify_buffer(handle: CorrectorHandle, manifest: dict) -> None:
    """Forward the history-buffer manifest (fine-tune hook). Identity and
    mock correctors accept and ignore it."""
    if handle.kind != "external":
        return
    try:
        r = requests.post(
            handle.endpoint.rstrip("/") + "/buffer", json=manifest, timeout=handle.timeout
        )
    except requests.RequestException as e:
        raise CorrectorError(f"corrector unreachable: {e}") from e
    if r.status_code not in (200, 204):
        raise CorrectorError(f"buffer notification returned {r.status_code}")
