"""Image and depth-buffer file I/O."""

import struct

import numpy as np
from PIL import Image

from .errors import DataError
from .render import DepthMap

DEPTH_MAGIC = b"GSDD"


def save_png(path, pixels: np.ndarray) -> None:
    """Write an (H, W, 3) float image in [0, 1] or an (H, W) bool mask."""
    arr = np.asarray(pixels)
    if arr.dtype == bool:
        data = arr.astype(np.uint8) * 255
    else:
        data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def load_png(path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def load_mask_png(path) -> np.ndarray:
    img = Image.open(path).convert("L")
    return np.asarray(img) >= 128


def save_depth(path, dm: DepthMap) -> None:
    """16-byte header (magic, u32 width, u32 height, u32 reserved) followed
    by row-major float32 depths; invalid pixels store 0."""
    h, w = dm.depth.shape
    data = np.where(dm.validity, dm.depth, 0.0).astype("<f4")
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<III", w, h, 0))
        f.write(data.tobytes())


def load_depth(path) -> DepthMap:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != DEPTH_MAGIC:
            raise DataError(f"{path}: not a depth buffer (bad magic)")
        w, h, _ = struct.unpack("<III", header[4:])
        depth = np.frombuffer(f.read(4 * w * h), dtype="<f4").reshape(h, w).astype(np.float64)
    return DepthMap(depth=depth, validity=depth > 0.0)
