"""Software order-independent-transparency rasterizer.

Quads go through three stages: setup (culling, edge functions, bounds),
binning into 32x32 tiles, and per-bin rasterization that sorts coverage
records by depth and blends samples through small per-pixel depth filters.
An exact per-pixel reference renderer is included for comparison.
"""
from .config import RasterLimits, RenderConfig
from .scene import Camera, Material, Scene, load_scene

__all__ = ["Camera", "Material", "RasterLimits", "RenderConfig", "Scene", "load_scene"]
__version__ = "0.1.0"
