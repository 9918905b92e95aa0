import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oitraster.scene import Camera, Material, Scene

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def screen_camera(width, height):
    """Camera whose clip space is the world: NDC = world xy, w = 1."""
    return Camera(np.eye(4), width, height)


def pixel_to_ndc(px, py, width, height):
    return 2.0 * px / width - 1.0, 1.0 - 2.0 * py / height


def screen_scene(tris_px, width, height, z=0.0, materials=None, mats=None):
    """Lone-triangle quads from pixel-space triangles under :func:`screen_camera`."""
    pos, quads = [], []
    for tri in tris_px:
        b = len(pos)
        for px, py in tri:
            x, y = pixel_to_ndc(px, py, width, height)
            pos.append((x, y, z))
        quads.append([b, b + 1, b + 2, b + 2])
    n = len(quads)
    return Scene(
        np.array(pos, float).reshape(-1, 3),
        np.array(quads, dtype=np.int64).reshape(-1, 4),
        np.zeros(n, np.int64) if mats is None else np.asarray(mats),
        materials or [Material()],
    )


def screen_quads(rects_px, width, height, depths, materials, mats):
    """Axis-aligned screen rectangles ``(x0, y0, x1, y1)`` as quads at NDC depths."""
    pos, quads = [], []
    for (x0, y0, x1, y1), z in zip(rects_px, depths):
        b = len(pos)
        for px, py in ((x0, y1), (x1, y1), (x1, y0), (x0, y0)):
            x, y = pixel_to_ndc(px, py, width, height)
            pos.append((x, y, z))
        quads.append([b, b + 1, b + 2, b + 3])
    return Scene(np.array(pos, float), np.array(quads), np.asarray(mats), materials)


@pytest.fixture
def cam64():
    return screen_camera(64, 64)


def numpy_coverage(edges, inclusive, width, height):
    """Per-pixel coverage of a triangle over the whole viewport, straight from its edge functions."""
    py, px = np.mgrid[0:height, 0:width] + 0.5
    cov = np.ones((height, width), dtype=bool)
    for i in range(3):
        a, b, c = edges[i]
        v = a * px + (b * py + c)
        cov &= (v > 0) | ((v == 0) & bool(inclusive[i]))
    return cov


def random_screen_triangles(rng, n, width, height, min_size=0.3, max_size=None):
    """Pixel-space triangles of log-uniform size, some hanging off the viewport."""
    max_size = max_size or 1.2 * max(width, height)
    tris = []
    for _ in range(n):
        c = rng.uniform(-0.15, 1.15, 2) * (width, height)
        s = np.exp(rng.uniform(np.log(min_size), np.log(max_size)))
        tris.append([tuple(c + rng.normal(size=2) * s) for _ in range(3)])
    return tris
