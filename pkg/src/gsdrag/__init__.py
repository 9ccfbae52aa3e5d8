"""gsdrag: drag-based editing engine for 3D Gaussian splatting scenes."""

__version__ = "0.1.0"

from .deform import Assignment, DragSpec, HandleTransform
from .render import Camera, DepthMap, RenderedImage
from .scene import Gaussian, GaussianScene, dc_to_rgb, load_ply, save_ply

__all__ = [
    "Assignment",
    "Camera",
    "DepthMap",
    "DragSpec",
    "Gaussian",
    "GaussianScene",
    "HandleTransform",
    "RenderedImage",
    "dc_to_rgb",
    "load_ply",
    "save_ply",
    "__version__",
]
