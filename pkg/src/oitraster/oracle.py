"""Exact per-pixel reference renderer and image comparison.

The reference keeps every fragment of every pixel, sorts each pixel's list
by the same (quantized depth, triangle index) key the pipeline uses and
blends it front to back.  Culling, coverage, shading and blending are the
very functions the pipeline runs, so any difference between the two images
comes from sample ordering alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import RenderConfig
from .depth_filter import blend_into
from .packing import quantize_depth
from .raster import TRI_KEY_SHIFT
from .scanline import pixel_covered
from .scene import Camera, Scene
from .setup import SetupResult, run_setup
from .shading import build_shading_tables, shade_batch


class ImageSizeError(ValueError):
    pass


@njit(cache=True, nogil=True)
def _visit(tri_edges, tri_inclusive, tri_bounds, tri_cull, tri_depth, width, height, counts, offsets, keys, fill):
    for t in range(tri_edges.shape[0]):
        if tri_cull[t] != 0:
            continue
        e = tri_edges[t]
        inc = tri_inclusive[t]
        for y in range(max(tri_bounds[t, 1], 0), min(tri_bounds[t, 3], height - 1) + 1):
            for x in range(max(tri_bounds[t, 0], 0), min(tri_bounds[t, 2], width - 1) + 1):
                if pixel_covered(e, inc, x, y):
                    p = y * width + x
                    if fill:
                        d = tri_depth[t, 0] * (x + 0.5) + (tri_depth[t, 1] * (y + 0.5) + tri_depth[t, 2])
                        keys[offsets[p] + counts[p]] = float(quantize_depth(d)) * TRI_KEY_SHIFT + t
                    counts[p] += 1


@njit(cache=True, nogil=True)
def reference_kernel(width, height, tri_edges, tri_inclusive, tri_bounds, tri_cull, tri_depth,
                     tri_normal, quad_material, vertex_colors, vertex_normals, vertex_uvs, tables):
    """Premultiplied float32 image and per-pixel fragment counts."""
    n = width * height
    counts = np.zeros(n, dtype=np.int64)
    offsets = np.zeros(n, dtype=np.int64)
    keys = np.empty(0, dtype=np.float64)
    _visit(tri_edges, tri_inclusive, tri_bounds, tri_cull, tri_depth, width, height, counts, offsets, keys, False)
    total = 0
    for p in range(n):
        offsets[p] = total
        total += counts[p]
    keys = np.empty(total, dtype=np.float64)
    fill_counts = np.zeros(n, dtype=np.int64)
    _visit(tri_edges, tri_inclusive, tri_bounds, tri_cull, tri_depth, width, height, fill_counts, offsets, keys, True)

    ts = np.empty(total, dtype=np.int64)
    xs = np.empty(total, dtype=np.int64)
    ys = np.empty(total, dtype=np.int64)
    for p in range(n):
        s = offsets[p]
        keys[s : s + counts[p]] = np.sort(keys[s : s + counts[p]])
        for j in range(s, s + counts[p]):
            ts[j] = np.int64(keys[j] % TRI_KEY_SHIFT)
            xs[j] = p % width
            ys[j] = p // width
    colors = np.empty((total, 4), dtype=np.float32)
    shade_batch(ts, xs, ys, total, tri_edges, tri_normal, quad_material,
                vertex_colors, vertex_normals, vertex_uvs, tables, colors)
    acc = np.zeros((n, 4), dtype=np.float32)
    for p in range(n):
        for j in range(offsets[p], offsets[p] + counts[p]):
            blend_into(acc, p, colors[j, 0], colors[j, 1], colors[j, 2], colors[j, 3])
    return acc.reshape(height, width, 4), counts.reshape(height, width)


@njit(cache=True, nogil=True)
def fragment_keys(width, height, tri_edges, tri_inclusive, tri_bounds, tri_cull, tri_depth, x, y):
    """Sort keys of every fragment at pixel (x, y), ascending."""
    out = []
    for t in range(tri_edges.shape[0]):
        if tri_cull[t] != 0:
            continue
        b = tri_bounds[t]
        if b[0] <= x <= b[2] and b[1] <= y <= b[3] and pixel_covered(tri_edges[t], tri_inclusive[t], x, y):
            d = tri_depth[t, 0] * (x + 0.5) + (tri_depth[t, 1] * (y + 0.5) + tri_depth[t, 2])
            out.append(float(quantize_depth(d)) * TRI_KEY_SHIFT + t)
    return np.sort(np.array(out, dtype=np.float64))


def render_reference_setup(setup: SetupResult, tables, config: RenderConfig):
    return reference_kernel(
        setup.width, setup.height, setup.tri_edges, setup.tri_inclusive, setup.tri_bounds,
        setup.tri_cull, setup.tri_depth, setup.tri_normal, setup.material,
        setup.vertex_colors, setup.vertex_normals, setup.vertex_uvs, tables.as_tuple(),
    )


def render_reference(scene: Scene, camera: Camera, config: RenderConfig | None = None):
    """Premultiplied float32 accumulation (before the background) and fragment counts."""
    config = config or RenderConfig()
    setup = run_setup(scene, camera, config)
    tables = build_shading_tables(scene.materials, config.light_dir, config.ambient)
    return render_reference_setup(setup, tables, config)


@dataclass
class ImageDiff:
    differing_pixel_count: int
    max_channel_delta: int
    invalid_pixel_count: int
    invalid_percent: float
    mask: np.ndarray  # (H, W) bool, pixels that differ

    @property
    def identical(self) -> bool:
        return self.differing_pixel_count == 0


def compare_images(a: np.ndarray, b: np.ndarray, invalid_mask: np.ndarray | None = None) -> ImageDiff:
    """Compare two RGBA8 images; ``invalid_mask`` adds invalid-pixel statistics."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ImageSizeError(f"image shapes differ: {a.shape} vs {b.shape}")
    delta = np.abs(a.astype(np.int32) - b.astype(np.int32))
    if delta.ndim == 2:
        delta = delta[..., None]
    mask = (delta > 0).any(axis=-1)
    total = mask.size
    if invalid_mask is None:
        invalid = 0
    else:
        invalid_mask = np.asarray(invalid_mask, dtype=bool)
        if invalid_mask.shape != mask.shape:
            raise ImageSizeError(f"invalid mask shape {invalid_mask.shape} does not match {mask.shape}")
        invalid = int(invalid_mask.sum())
    return ImageDiff(
        differing_pixel_count=int(mask.sum()),
        max_channel_delta=int(delta.max()) if delta.size else 0,
        invalid_pixel_count=invalid,
        invalid_percent=100.0 * invalid / total if total else 0.0,
        mask=mask,
    )
