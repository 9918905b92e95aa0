"""Sample shading shared verbatim by the pipeline and the reference renderer.

Color math runs in float32 with a fixed operation order; barycentrics and
their analytic uv derivatives are evaluated in float64 from the setup data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .packing import decode_normal, unpack_color

MAT_VERTEX_COLORS = 1
MAT_VERTEX_NORMALS = 2
MAT_UVS = 4

F0 = np.float32(0.0)
F1 = np.float32(1.0)


@dataclass
class ShadingTables:
    """Flat, numba-friendly copies of the materials and their mip chains."""

    base: np.ndarray  # (M, 4) float32
    opacity: np.ndarray  # (M,) float32
    flags: np.ndarray  # (M,) int32
    texture: np.ndarray  # (M,) int32, -1 for none
    texels: np.ndarray  # (N, 4) float32, all levels of all textures
    levels: np.ndarray  # (L, 3) int64: offset, width, height
    first_level: np.ndarray  # (T, 2) int64: first level, level count
    light: np.ndarray  # (3,) float32 unit vector towards the light
    ambient: np.float32

    def as_tuple(self):
        return (
            self.base, self.opacity, self.flags, self.texture, self.texels,
            self.levels, self.first_level, self.light, np.float32(self.ambient),
        )


def build_mip_chain(image: np.ndarray) -> list[np.ndarray]:
    """2x2 box-filtered mip levels down to 1x1 (odd sizes drop the last row/column)."""
    levels = [np.asarray(image, dtype=np.float32)]
    while levels[-1].shape[0] > 1 or levels[-1].shape[1] > 1:
        im = levels[-1]
        h, w = max(im.shape[0] // 2, 1), max(im.shape[1] // 2, 1)
        ys = np.minimum(np.arange(2 * h).reshape(h, 2), im.shape[0] - 1)
        xs = np.minimum(np.arange(2 * w).reshape(w, 2), im.shape[1] - 1)
        acc = np.zeros((h, w, 4), dtype=np.float32)
        for dy in (0, 1):
            for dx in (0, 1):
                acc += im[ys[:, dy]][:, xs[:, dx]]
        levels.append(acc * np.float32(0.25))
    return levels


def build_shading_tables(materials, light_dir=(0.3, 0.5, 0.8), ambient=0.2) -> ShadingTables:
    base = np.array([m.base_color for m in materials], dtype=np.float32).reshape(-1, 4)
    opacity = np.array([m.opacity for m in materials], dtype=np.float32)
    flags = np.array(
        [
            (MAT_VERTEX_COLORS if m.uses_vertex_colors else 0)
            | (MAT_VERTEX_NORMALS if m.uses_vertex_normals else 0)
            | (MAT_UVS if m.uses_uvs and m.texture is not None else 0)
            for m in materials
        ],
        dtype=np.int32,
    )
    tex_index = np.full(len(materials), -1, dtype=np.int32)
    texels, levels, first = [], [], []
    offset = 0
    for i, m in enumerate(materials):
        if m.texture is None:
            continue
        tex_index[i] = len(first)
        chain = build_mip_chain(m.texture)
        first.append((len(levels), len(chain)))
        for lv in chain:
            levels.append((offset, lv.shape[1], lv.shape[0]))
            texels.append(lv.reshape(-1, 4))
            offset += lv.shape[0] * lv.shape[1]
    light = np.asarray(light_dir, dtype=np.float64)
    light = (light / np.linalg.norm(light)).astype(np.float32)
    return ShadingTables(
        base=base,
        opacity=opacity,
        flags=flags,
        texture=tex_index,
        texels=np.concatenate(texels).astype(np.float32) if texels else np.zeros((1, 4), np.float32),
        levels=np.array(levels, dtype=np.int64).reshape(-1, 3),
        first_level=np.array(first, dtype=np.int64).reshape(-1, 2),
        light=light,
        ambient=np.float32(ambient),
    )


@njit(cache=True, nogil=True)
def _fetch(texels, off, w, h, x, y, c):
    x = x % w
    y = y % h
    return texels[off + y * w + x, c]


@njit(cache=True, nogil=True)
def _bilinear(texels, levels, lv, u, v, out):
    off, w, h = levels[lv, 0], levels[lv, 1], levels[lv, 2]
    fx = u * w - 0.5
    fy = v * h - 0.5
    x0 = int(math.floor(fx))
    y0 = int(math.floor(fy))
    tx = np.float32(fx - x0)
    ty = np.float32(fy - y0)
    for c in range(4):
        a = _fetch(texels, off, w, h, x0, y0, c)
        b = _fetch(texels, off, w, h, x0 + 1, y0, c)
        d = _fetch(texels, off, w, h, x0, y0 + 1, c)
        e = _fetch(texels, off, w, h, x0 + 1, y0 + 1, c)
        top = a + (b - a) * tx
        bot = d + (e - d) * tx
        out[c] = top + (bot - top) * ty


@njit(cache=True, nogil=True)
def sample_texture(texels, levels, first_level, tex, u, v, dudx, dvdx, dudy, dvdy, out):
    """Trilinear lookup; mip level is log2 of the longest uv gradient in texels."""
    lv0, count = first_level[tex, 0], first_level[tex, 1]
    w, h = levels[lv0, 1], levels[lv0, 2]
    lx = math.sqrt((dudx * w) ** 2 + (dvdx * h) ** 2)
    ly = math.sqrt((dudy * w) ** 2 + (dvdy * h) ** 2)
    m = max(lx, ly)
    lod = math.log2(m) if m > 0.0 else 0.0
    lod = min(max(lod, 0.0), count - 1.0)
    l0 = int(math.floor(lod))
    f = np.float32(lod - l0)
    # v grows upwards in texture space, rows grow downwards in the image
    vv = 1.0 - v
    _bilinear(texels, levels, lv0 + l0, u, vv, out)
    if f > 0 and l0 + 1 < count:
        a0, a1, a2, a3 = out[0], out[1], out[2], out[3]
        _bilinear(texels, levels, lv0 + l0 + 1, u, vv, out)
        out[0] = a0 + (out[0] - a0) * f
        out[1] = a1 + (out[1] - a1) * f
        out[2] = a2 + (out[2] - a2) * f
        out[3] = a3 + (out[3] - a3) * f


@njit(cache=True, nogil=True)
def interpolate_attributes(tri_edges, t, px, py, vertex_uvs, q, k):
    """Perspective-correct barycentrics, uv and analytic uv gradients at a point.

    Returns ``(b0, b1, b2, u, v, dudx, dvdx, dudy, dvdy)`` for triangle ``t``
    (corner ``k`` of visible quad ``q``).
    """
    e = tri_edges[t]
    l0 = e[0, 0] * px + e[0, 1] * py + e[0, 2]
    l1 = e[1, 0] * px + e[1, 1] * py + e[1, 2]
    l2 = e[2, 0] * px + e[2, 1] * py + e[2, 2]
    s = l0 + l1 + l2
    b0, b1, b2 = l0 / s, l1 / s, l2 / s
    if k == 0:
        i1, i2 = 1, 2
    else:
        i1, i2 = 2, 3
    u0, v0 = vertex_uvs[q, 0, 0], vertex_uvs[q, 0, 1]
    u1, v1 = vertex_uvs[q, i1, 0], vertex_uvs[q, i1, 1]
    u2, v2 = vertex_uvs[q, i2, 0], vertex_uvs[q, i2, 1]
    u = b0 * u0 + b1 * u1 + b2 * u2
    v = b0 * v0 + b1 * v1 + b2 * v2
    # u = Nu / S with Nu, S affine: du/dx = (dNu/dx - u dS/dx) / S
    sx = e[0, 0] + e[1, 0] + e[2, 0]
    sy = e[0, 1] + e[1, 1] + e[2, 1]
    dudx = (e[0, 0] * u0 + e[1, 0] * u1 + e[2, 0] * u2 - u * sx) / s
    dudy = (e[0, 1] * u0 + e[1, 1] * u1 + e[2, 1] * u2 - u * sy) / s
    dvdx = (e[0, 0] * v0 + e[1, 0] * v1 + e[2, 0] * v2 - v * sx) / s
    dvdy = (e[0, 1] * v0 + e[1, 1] * v1 + e[2, 1] * v2 - v * sy) / s
    return b0, b1, b2, u, v, dudx, dvdx, dudy, dvdy


@njit(cache=True, nogil=True)
def shade_batch(ts, xs, ys, n, tri_edges, tri_normal, quad_material, vertex_colors, vertex_normals, vertex_uvs, tables, out):
    """Premultiplied float32 RGBA of samples ``(ts[i], xs[i], ys[i])`` for ``i < n`` into ``out[i]``.

    Every renderer shades through this loop, so a given sample always gets
    the same bits.
    """
    base, opacity, flags, texture, texels, levels, first_level, light, ambient = tables
    tex_out = np.empty(4, dtype=np.float32)
    for i in range(n):
        t = ts[i]
        q = t >> 1
        k = t & 1
        px = xs[i] + 0.5
        py = ys[i] + 0.5
        mat = quad_material[q]
        mf = flags[mat]
        b0, b1, b2, u, v, dudx, dvdx, dudy, dvdy = interpolate_attributes(tri_edges, t, px, py, vertex_uvs, q, k)
        f0, f1, f2 = np.float32(b0), np.float32(b1), np.float32(b2)
        i1 = 1 if k == 0 else 2
        i2 = 2 if k == 0 else 3

        r = base[mat, 0]
        g = base[mat, 1]
        b = base[mat, 2]
        a = opacity[mat]

        if mf & MAT_VERTEX_COLORS:
            c0 = unpack_color(vertex_colors[q, 0])
            c1 = unpack_color(vertex_colors[q, i1])
            c2 = unpack_color(vertex_colors[q, i2])
            r = r * (f0 * np.float32(c0[0]) + f1 * np.float32(c1[0]) + f2 * np.float32(c2[0]))
            g = g * (f0 * np.float32(c0[1]) + f1 * np.float32(c1[1]) + f2 * np.float32(c2[1]))
            b = b * (f0 * np.float32(c0[2]) + f1 * np.float32(c1[2]) + f2 * np.float32(c2[2]))
            a = a * (f0 * np.float32(c0[3]) + f1 * np.float32(c1[3]) + f2 * np.float32(c2[3]))

        if mf & MAT_UVS:
            sample_texture(texels, levels, first_level, texture[mat], u, v, dudx, dvdx, dudy, dvdy, tex_out)
            r = r * tex_out[0]
            g = g * tex_out[1]
            b = b * tex_out[2]
            a = a * tex_out[3]

        if mf & MAT_VERTEX_NORMALS:
            n0 = decode_normal(vertex_normals[q, 0])
            n1 = decode_normal(vertex_normals[q, i1])
            n2 = decode_normal(vertex_normals[q, i2])
            nx = f0 * np.float32(n0[0]) + f1 * np.float32(n1[0]) + f2 * np.float32(n2[0])
            ny = f0 * np.float32(n0[1]) + f1 * np.float32(n1[1]) + f2 * np.float32(n2[1])
            nz = f0 * np.float32(n0[2]) + f1 * np.float32(n1[2]) + f2 * np.float32(n2[2])
        else:
            n0 = decode_normal(tri_normal[t])
            nx, ny, nz = np.float32(n0[0]), np.float32(n0[1]), np.float32(n0[2])
        ln = np.float32(math.sqrt(nx * nx + ny * ny + nz * nz))
        if ln > F0:
            nx, ny, nz = nx / ln, ny / ln, nz / ln
        lambert = nx * light[0] + ny * light[1] + nz * light[2]
        lambert = min(max(lambert, F0), F1)
        lit = ambient + (F1 - ambient) * lambert
        out[i, 0] = r * lit * a
        out[i, 1] = g * lit * a
        out[i, 2] = b * lit * a
        out[i, 3] = a


@njit(cache=True, nogil=True)
def shade_sample(t, x, y, tri_edges, tri_normal, quad_material, vertex_colors, vertex_normals, vertex_uvs, tables):
    """Premultiplied float32 RGBA of triangle ``t`` at pixel ``(x, y)``."""
    ts = np.array([t], dtype=np.int64)
    xs = np.array([x], dtype=np.int64)
    ys = np.array([y], dtype=np.int64)
    out = np.empty((1, 4), dtype=np.float32)
    shade_batch(ts, xs, ys, 1, tri_edges, tri_normal, quad_material, vertex_colors, vertex_normals, vertex_uvs, tables, out)
    return out[0, 0], out[0, 1], out[0, 2], out[0, 3]


def shade_context(setup, tables: ShadingTables, t: int, x: int, y: int) -> np.ndarray:
    """Python entry point: premultiplied RGBA of triangle ``t`` at pixel ``(x, y)``."""
    return np.array(
        shade_sample(
            t, x, y, setup.tri_edges, setup.tri_normal, setup.material,
            setup.vertex_colors, setup.vertex_normals, setup.vertex_uvs, tables.as_tuple(),
        ),
        dtype=np.float32,
    )
