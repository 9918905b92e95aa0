"""Deterministic generated scenes for tests, benchmarks and the CLI.

Every scene is built for :func:`default_camera`: a 60 degree perspective
camera at the origin looking down ``-z``.
"""
from __future__ import annotations

import math

import numpy as np

from .scene import Camera, Material, Scene, look_at, perspective

KINDS = ("layered_quads", "intersecting_shells", "random_soup", "dense_bin", "block_overflow", "boxes")

FOV_Y = 60.0
NEAR = 0.5
FAR = 50.0


class UnknownSceneError(ValueError):
    pass


def default_camera(width: int = 512, height: int = 512) -> Camera:
    vp = perspective(FOV_Y, width / height, NEAR, FAR) @ look_at((0.0, 0.0, 0.0), (0.0, 0.0, -1.0))
    return Camera(vp, width, height)


def _unproject(px, py, dist, width, height):
    """World point at distance ``dist`` along -z under pixel coordinate (px, py)."""
    t = math.tan(math.radians(FOV_Y) / 2)
    x = ((2.0 * px / width) - 1.0) * t * dist * width / height
    y = (1.0 - 2.0 * py / height) * t * dist
    return np.array([x, y, -dist])


def _random_material(rng, name, alpha_range=(0.2, 0.6)) -> Material:
    rgb = tuple(float(c) for c in rng.uniform(0.15, 1.0, 3))
    return Material(name, (*rgb, 1.0), float(rng.uniform(*alpha_range)))


def layered_quads(seed=0, n=32, front_alpha=None, shuffle=True):
    """``n`` full-screen translucent layers at distinct depths, drawn in shuffled order."""
    rng = np.random.default_rng(seed)
    dists = 2.0 + 0.25 * np.arange(n)
    order = rng.permutation(n) if shuffle else np.arange(n)
    pos, quads, mats, materials = [], [], [], []
    for rank, i in enumerate(order):
        d = dists[i]
        h = 2.0 * d  # well beyond the view frustum at that distance
        b = len(pos)
        pos += [(-h, -h, -d), (h, -h, -d), (h, h, -d), (-h, h, -d)]
        quads.append([b, b + 1, b + 2, b + 3])
        m = _random_material(rng, f"layer{i}")
        if i == 0 and front_alpha is not None:
            m.opacity = float(front_alpha)
        materials.append(m)
        mats.append(rank)
    return Scene(np.array(pos, float), np.array(quads), np.array(mats), materials, name="layered_quads")


def random_soup(seed=0, n=2000, width=512, height=512):
    """``n`` random translucent triangles (stored as lone-triangle quads), mixed sizes."""
    if n > 10_000:
        raise ValueError("random_soup is limited to 10k triangles")
    rng = np.random.default_rng(seed)
    materials = [_random_material(rng, f"m{i}", (0.1, 0.9)) for i in range(16)]
    pos, quads = [], []
    for _ in range(n):
        cx, cy = rng.uniform(-0.1, 1.1) * width, rng.uniform(-0.1, 1.1) * height
        size = float(np.exp(rng.uniform(np.log(2.0), np.log(0.4 * width))))
        b = len(pos)
        for _k in range(3):
            d = rng.uniform(3.0, 12.0)
            p = _unproject(cx + rng.normal() * size, cy + rng.normal() * size, d, width, height)
            pos.append(p)
        quads.append([b, b + 1, b + 2, b + 2])
    mats = rng.integers(0, len(materials), n)
    return Scene(np.array(pos), np.array(quads), mats, materials, name="random_soup")


def dense_bin(seed=0, n=1200, width=512, height=512):
    """Many small overlapping quads inside one 32x32 bin plus a sparse backdrop."""
    rng = np.random.default_rng(seed)
    materials = [_random_material(rng, f"m{i}", (0.05, 0.4)) for i in range(8)]
    pos, quads = [], []
    bx, by = 32 * (width // 64), 32 * (height // 64)
    for _ in range(n):
        d = rng.uniform(3.0, 9.0)
        x0, y0 = bx + rng.uniform(1, 20), by + rng.uniform(1, 20)
        w, h = rng.uniform(3, 10), rng.uniform(3, 10)
        b = len(pos)
        pos += [_unproject(x, y, d, width, height) for x, y in ((x0, y0 + h), (x0 + w, y0 + h), (x0 + w, y0), (x0, y0))]
        quads.append([b, b + 1, b + 2, b + 3])
    for _ in range(40):
        d = rng.uniform(5.0, 15.0)
        x0, y0 = rng.uniform(0, width), rng.uniform(0, height)
        s = rng.uniform(20, 120)
        b = len(pos)
        pos += [_unproject(x, y, d, width, height) for x, y in ((x0, y0 + s), (x0 + s, y0 + s), (x0 + s, y0), (x0, y0))]
        quads.append([b, b + 1, b + 2, b + 3])
    mats = rng.integers(0, len(materials), len(quads))
    return Scene(np.array(pos), np.array(quads), mats, materials, name="dense_bin")


def block_overflow(seed=0, n=300, width=512, height=512):
    """``n`` lone triangles covering one 8x8 block: few enough for the low path by
    count, too many tri-blocks for a single low-path block."""
    rng = np.random.default_rng(seed)
    materials = [_random_material(rng, f"m{i}", (0.02, 0.1)) for i in range(4)]
    pos, quads = [], []
    ox, oy = 32 * (width // 64) + 8, 32 * (height // 64) + 8
    for _ in range(n):
        d = rng.uniform(3.0, 9.0)
        b = len(pos)
        pos += [
            _unproject(ox - rng.uniform(0.5, 3), oy + 8 + rng.uniform(0.5, 3), d, width, height),
            _unproject(ox + 8 + rng.uniform(4, 8), oy + 8 + rng.uniform(0.5, 3), d, width, height),
            _unproject(ox - rng.uniform(0.5, 3), oy - rng.uniform(4, 8), d, width, height),
        ]
        quads.append([b, b + 1, b + 2, b + 2])
    mats = rng.integers(0, len(materials), n)
    return Scene(np.array(pos), np.array(quads), mats, materials, name="block_overflow")


def _rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


def intersecting_shells(seed=0, n_leaves=600, n_shells=3, width=512, height=512):
    """Foliage-like clutter: interpenetrating translucent leaves around a few noisy
    concentric spherical shells, so many blocks hold surfaces crossing in depth."""
    rng = np.random.default_rng(seed)
    materials = [_random_material(rng, f"m{i}", (0.15, 0.5)) for i in range(12)]
    pos, quads, mats = [], [], []
    center = np.array([0.0, 0.0, -6.0])

    # shells: lat-long quads with radial noise
    nu, nv = 24, 12
    for s in range(n_shells):
        radius = 1.2 + 0.35 * s
        base = len(pos)
        for j in range(nv + 1):
            th = math.pi * j / nv
            for i in range(nu):
                ph = 2 * math.pi * i / nu
                r = radius * (1.0 + 0.12 * rng.normal())
                pos.append(center + r * np.array([math.sin(th) * math.cos(ph), math.cos(th), math.sin(th) * math.sin(ph)]))
        for j in range(nv):
            for i in range(nu):
                a = base + j * nu + i
                b = base + j * nu + (i + 1) % nu
                quads.append([a, b, b + nu, a + nu])
                mats.append(int(rng.integers(len(materials))))

    # leaves: random oriented quads crossing each other and the shells
    for _ in range(n_leaves):
        c = center + rng.normal(size=3) * np.array([1.3, 1.3, 1.3])
        rot = _rotation(rng)
        w, h = rng.uniform(0.25, 0.7), rng.uniform(0.1, 0.3)
        b = len(pos)
        for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            pos.append(c + rot @ np.array([sx * w, sy * h, 0.0]))
        quads.append([b, b + 1, b + 2, b + 3])
        mats.append(int(rng.integers(len(materials))))
    return Scene(np.array(pos), np.array(quads), np.array(mats), materials, name="intersecting_shells")


def checker_texture(size=64, cells=8) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] * cells // size
    on = ((x + y) % 2).astype(np.float32)
    tex = np.ones((size, size, 4), dtype=np.float32)
    tex[..., 0] = 0.3 + 0.7 * on
    tex[..., 1] = 0.3 + 0.5 * (1 - on)
    tex[..., 2] = 0.9 - 0.4 * on
    return tex


def _box(center, half, pos, quads, normals, uvs, colors):
    cx, cy, cz = center
    hx, hy, hz = half
    faces = [  # outward normal, (u axis, v axis) in world units
        ((1, 0, 0), (0, 0, -1), (0, 1, 0)),
        ((-1, 0, 0), (0, 0, 1), (0, 1, 0)),
        ((0, 1, 0), (1, 0, 0), (0, 0, -1)),
        ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
        ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
        ((0, 0, -1), (-1, 0, 0), (0, 1, 0)),
    ]
    h = np.array([hx, hy, hz])
    for n, u, v in faces:
        n, u, v = (np.array(a, float) for a in (n, u, v))
        b = len(pos)
        for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            pos.append(np.array(center) + n * h + su * u * h + sv * v * h)
            normals.append(n)
            uvs.append(((su + 1) / 2, (sv + 1) / 2))
            colors.append((0.5 + 0.5 * su * 0.8, 0.5 + 0.4 * sv, 0.8, 1.0))
        quads.append([b, b + 1, b + 2, b + 3])


def boxes(seed=0):
    """Three overlapping translucent boxes: flat-shaded, vertex-colored and textured."""
    rng = np.random.default_rng(seed)
    pos, quads, normals, uvs, colors = [], [], [], [], []
    specs = [((-0.9, -0.2, -5.0), (0.8, 0.8, 0.8)), ((0.4, 0.3, -5.6), (0.9, 0.6, 0.7)), ((0.2, -0.6, -4.2), (0.5, 0.5, 0.5))]
    for center, half in specs:
        _box(center, half, pos, quads, normals, uvs, colors)
    # tilt the scene slightly so three faces of each box are visible
    rot = np.array(
        [[math.cos(0.5), 0, math.sin(0.5)], [0, 1, 0], [-math.sin(0.5), 0, math.cos(0.5)]]
    ) @ np.array([[1, 0, 0], [0, math.cos(0.4), -math.sin(0.4)], [0, math.sin(0.4), math.cos(0.4)]])
    pivot = np.array([0.0, 0.0, -5.0])
    pos = (np.array(pos) - pivot) @ rot.T + pivot
    normals = np.array(normals) @ rot.T
    materials = [
        Material("glass", (0.4, 0.7, 1.0, 1.0), 0.45),
        Material("tinted", (1.0, 1.0, 1.0, 1.0), 0.55, uses_vertex_colors=True, uses_vertex_normals=True),
        Material("checker", (1.0, 1.0, 1.0, 1.0), 0.7, texture=checker_texture(), uses_uvs=True),
    ]
    mats = np.repeat(np.arange(3), 6)
    del rng
    return Scene(pos, np.array(quads), mats, materials, normals=normals, colors=np.array(colors), uvs=np.array(uvs, float), name="boxes")


_GENERATORS = {
    "layered_quads": layered_quads,
    "intersecting_shells": intersecting_shells,
    "random_soup": random_soup,
    "dense_bin": dense_bin,
    "block_overflow": block_overflow,
    "boxes": boxes,
}


def generate_synthetic_scene(kind: str, seed: int = 0, **params) -> Scene:
    """Build the named generated scene; identical for identical ``(kind, seed, params)``."""
    try:
        gen = _GENERATORS[kind]
    except KeyError:
        raise UnknownSceneError(f"unknown scene kind {kind!r}; expected one of {', '.join(KINDS)}") from None
    return gen(seed=seed, **params)
