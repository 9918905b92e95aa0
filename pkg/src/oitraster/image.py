"""RGBA8 PNG input and output."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def save_png(path: str | Path, rgba: np.ndarray) -> None:
    rgba = np.ascontiguousarray(rgba, dtype=np.uint8)
    if rgba.ndim != 3 or rgba.shape[2] != 4:
        raise ValueError(f"expected an (H, W, 4) image, got shape {rgba.shape}")
    Image.fromarray(rgba, mode="RGBA").save(path, format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGBA"), dtype=np.uint8).copy()
