"""Stage 1: cull invisible quads and precompute per-triangle / per-quad data.

Triangles are rasterized with 2D-homogeneous edge functions: for a triangle
with homogeneous screen vertices ``V_i = (X_i, Y_i, W_i)`` the three edge
functions are the rows of ``inverse([V0 V1 V2])``.  Evaluated at a pixel
center they give ``lambda_i``, which are all non-negative exactly on covered
samples in front of the eye, so no geometric clipping is needed.
Perspective-correct barycentrics are ``lambda_i / sum(lambda)`` and the NDC
depth is ``sum(lambda_i * z_i)``.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import packing
from .config import RenderConfig
from .scene import Camera, Scene

BIN_SIZE = 32
CHUNK_SIZE = 1024
AABB_EPS = 1e-6

# per-triangle cull bits
TRI_DEGENERATE = 1
TRI_BACKFACING = 2
TRI_FRUSTUM = 4
TRI_BETWEEN = 8

TRI_CORNERS = ((0, 1, 2), (0, 2, 3))


class CullReason(enum.IntEnum):
    VISIBLE = 0
    DEGENERATE = 1
    BACKFACING = 2
    FRUSTUM = 3
    BETWEEN_SAMPLES = 4


class SizeClass(enum.IntEnum):
    SMALL = 0
    LARGE = 1


@dataclass(frozen=True)
class CullResult:
    reason: CullReason
    size_class: SizeClass | None = None

    @property
    def visible(self) -> bool:
        return self.reason == CullReason.VISIBLE


class SetupCapacityError(RuntimeError):
    pass


@dataclass
class TriangleSetup:
    """Rasterization and interpolation data of one triangle."""

    edges: np.ndarray  # (3, 3): lambda_i = a*px + b*py + c
    inclusive: np.ndarray  # (3,) bool: sample exactly on the edge counts as covered
    depth: np.ndarray  # (3,): depth = a*px + b*py + c
    bounds: tuple[int, int, int, int]  # inclusive pixel AABB (x0, y0, x1, y1)
    flat_normal: int
    material_id: int
    cull_flags: int

    @property
    def y_range(self) -> tuple[int, int]:
        return self.bounds[1], self.bounds[3]

    def bary_at(self, px, py) -> np.ndarray:
        lam = self.edges[:, 0] * px + self.edges[:, 1] * py + self.edges[:, 2]
        return lam / lam.sum()

    def depth_at(self, px, py) -> float:
        return float(self.depth[0] * px + (self.depth[1] * py + self.depth[2]))

    def covers(self, x: int, y: int) -> bool:
        return bool(_covers(self.edges, self.inclusive, x, y)) and (
            self.bounds[0] <= x <= self.bounds[2] and self.bounds[1] <= y <= self.bounds[3]
        )


def _covers(edges, inclusive, x, y):
    px, py = x + 0.5, y + 0.5
    for i in range(3):
        v = edges[i, 0] * px + (edges[i, 1] * py + edges[i, 2])
        if v < 0 or (v == 0 and not inclusive[i]):
            return False
    return True


@dataclass
class SetupStats:
    input_quads: int = 0
    visible_quads: int = 0
    small_quads: int = 0
    large_quads: int = 0
    culled: dict[str, int] = field(
        default_factory=lambda: {r.name.lower(): 0 for r in CullReason if r != CullReason.VISIBLE}
    )

    @property
    def visible_percent(self) -> float:
        return 100.0 * self.visible_quads / self.input_quads if self.input_quads else 0.0


@dataclass
class SetupResult:
    """Compacted Stage 1 output; triangle ``2*q + t`` belongs to visible quad ``q``."""

    width: int
    height: int
    quad_index: np.ndarray  # (V,) source quad
    bin_aabb_word: np.ndarray  # (V,) uint32 packed bin AABB + cull flags
    bin_aabb: np.ndarray  # (V, 4) int32 x0, y0, x1, y1 in bins
    large: np.ndarray  # (V,) bool
    material: np.ndarray  # (V,) int32
    vertex_colors: np.ndarray  # (V, 4) uint32 R8G8B8A8
    vertex_normals: np.ndarray  # (V, 4) uint32 X10Y10Z10
    vertex_uvs: np.ndarray  # (V, 4, 2) float32
    tri_edges: np.ndarray  # (T, 3, 3) float64
    tri_inclusive: np.ndarray  # (T, 3) uint8
    tri_depth: np.ndarray  # (T, 3) float64
    tri_bounds: np.ndarray  # (T, 4) int32
    tri_cull: np.ndarray  # (T,) uint8 cull bits
    tri_normal: np.ndarray  # (T,) uint32
    stats: SetupStats

    @property
    def visible_count(self) -> int:
        return len(self.quad_index)

    @property
    def bins_x(self) -> int:
        return -(-self.width // BIN_SIZE)

    @property
    def bins_y(self) -> int:
        return -(-self.height // BIN_SIZE)

    def triangle(self, t: int) -> TriangleSetup:
        return TriangleSetup(
            edges=self.tri_edges[t],
            inclusive=self.tri_inclusive[t].astype(bool),
            depth=self.tri_depth[t],
            bounds=tuple(int(v) for v in self.tri_bounds[t]),
            flat_normal=int(self.tri_normal[t]),
            material_id=int(self.material[t // 2]),
            cull_flags=int(self.tri_cull[t]),
        )


# -- geometry helpers --------------------------------------------------------

def clip_positions(positions: np.ndarray, camera: Camera) -> np.ndarray:
    p = np.asarray(positions, dtype=np.float64)
    return p @ camera.view_projection[:, :3].T + camera.view_projection[:, 3]


def _outside_planes(clip: np.ndarray) -> np.ndarray:
    """(..., n, 4) -> (..., n, 6) bool: vertex strictly outside each clip plane."""
    x, y, z, w = clip[..., 0], clip[..., 1], clip[..., 2], clip[..., 3]
    return np.stack([x > w, -x > w, y > w, -y > w, z > w, -z > w], axis=-1)


def _ndc_bounds(clip: np.ndarray, edges) -> tuple[np.ndarray, ...]:
    """Blinn-style screen extent of polygons without clipping.

    ``clip`` is (..., n, 4).  Returns NDC (xmin, xmax, ymin, ymax) and a mask of
    polygons with any part in front of the eye.  An edge crossing ``w = 0``
    sends its projection to infinity on the side of its crossing point.
    """
    w = clip[..., 3]
    front = w > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_w = np.where(front, 1.0 / np.where(front, w, 1.0), 0.0)
    out = []
    for axis in (0, 1):
        c = clip[..., axis]
        proj = c * inv_w
        lo = np.where(front, proj, np.inf).min(axis=-1)
        hi = np.where(front, proj, -np.inf).max(axis=-1)
        for i, j in edges:
            wi, wj = w[..., i], w[..., j]
            crossing = front[..., i] != front[..., j]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = wi / (wi - wj)
                cc = c[..., i] + t * (c[..., j] - c[..., i])
            hi = np.where(crossing & (cc >= 0), np.inf, hi)
            lo = np.where(crossing & (cc <= 0), -np.inf, lo)
        out += [lo, hi]
    return out[0], out[1], out[2], out[3], front.any(axis=-1)


def _clipped_ndc_bounds(tri_clip: np.ndarray):
    """NDC extent of each triangle intersected with the viewport square.

    Only meaningful where all three ``w > 0``.  The intersection of a
    triangle with the square is bounded by the triangle's vertices inside
    the square, its edge crossings with the square's sides and the square's
    corners inside the triangle.  Empty intersections give ``+inf/-inf``.
    """
    w = tri_clip[..., 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = tri_clip[..., 0] / w
        y = tri_clip[..., 1] / w
    tol = 1e-12
    pts_x, pts_y, ok = [x], [y], [(np.abs(x) <= 1 + tol) & (np.abs(y) <= 1 + tol)]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        xi, yi, xj, yj = x[..., i], y[..., i], x[..., j], y[..., j]
        for side in (-1.0, 1.0):
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (side - xi) / (xj - xi)
                yc = yi + t * (yj - yi)
                s = (side - yi) / (yj - yi)
                xc = xi + s * (xj - xi)
            pts_x += [np.full_like(yc, side)[..., None], xc[..., None]]
            pts_y += [yc[..., None], np.full_like(xc, side)[..., None]]
            ok += [((t >= 0) & (t <= 1) & (np.abs(yc) <= 1 + tol))[..., None], ((s >= 0) & (s <= 1) & (np.abs(xc) <= 1 + tol))[..., None]]
    cx = np.array([-1.0, 1.0, 1.0, -1.0])
    cy = np.array([-1.0, -1.0, 1.0, 1.0])
    orient = []
    for i, j in ((0, 1), (1, 2), (2, 0)):
        ex, ey = (x[..., j] - x[..., i])[..., None], (y[..., j] - y[..., i])[..., None]
        orient.append(ex * (cy - y[..., i, None]) - ey * (cx - x[..., i, None]))
    orient = np.stack(orient, axis=-1)
    inside = (orient >= 0).all(axis=-1) | (orient <= 0).all(axis=-1)
    pts_x.append(np.broadcast_to(cx, inside.shape))
    pts_y.append(np.broadcast_to(cy, inside.shape))
    ok.append(inside)
    px, py, valid = np.concatenate(pts_x, -1), np.concatenate(pts_y, -1), np.concatenate(ok, -1)
    valid &= np.isfinite(px) & np.isfinite(py)
    return (
        np.where(valid, px, np.inf).min(axis=-1),
        np.where(valid, px, -np.inf).max(axis=-1),
        np.where(valid, py, np.inf).min(axis=-1),
        np.where(valid, py, -np.inf).max(axis=-1),
    )


def _pixel_aabb(xmin, xmax, ymin, ymax, width, height):
    """Continuous NDC extents -> continuous pixel AABB clamped to the viewport."""
    xmin, xmax = np.maximum(xmin, -1.0), np.minimum(xmax, 1.0)
    ymin, ymax = np.maximum(ymin, -1.0), np.minimum(ymax, 1.0)
    px0 = (xmin + 1.0) * 0.5 * width
    px1 = (xmax + 1.0) * 0.5 * width
    py0 = (1.0 - ymax) * 0.5 * height
    py1 = (1.0 - ymin) * 0.5 * height
    return px0, py0, px1, py1


def _pixel_range(px0, py0, px1, py1, width, height):
    """Inclusive range of pixels whose centers lie inside a continuous AABB."""
    with np.errstate(invalid="ignore"):
        i0 = np.maximum(np.ceil(px0 - 0.5 - AABB_EPS), 0)
        i1 = np.minimum(np.floor(px1 - 0.5 + AABB_EPS), width - 1)
        j0 = np.maximum(np.ceil(py0 - 0.5 - AABB_EPS), 0)
        j1 = np.minimum(np.floor(py1 - 0.5 + AABB_EPS), height - 1)
    empty = ~((i0 <= i1) & (j0 <= j1))
    r = np.stack([i0, j0, i1, j1], axis=-1)
    r = np.where(empty[..., None], 0, r)
    return r.astype(np.int64), empty


def compute_screen_aabb(clip, width: int, height: int):
    """Conservative pixel-space AABB ``(x0, y0, x1, y1)`` of a quad (or triangle).

    Works when some vertices have ``w <= 0``.  Returns ``None`` when no part
    of the polygon lies in front of the eye.
    """
    clip = np.asarray(clip, dtype=np.float64)
    if len(clip) == 4:
        edges = ((0, 1), (1, 2), (2, 0), (2, 3), (3, 0))
    else:
        edges = ((0, 1), (1, 2), (2, 0))
    xmin, xmax, ymin, ymax, vis = _ndc_bounds(clip, edges)
    if not vis:
        return None
    return tuple(float(v) for v in _pixel_aabb(xmin, xmax, ymin, ymax, width, height))


def homogeneous_edge_functions(tri_clip: np.ndarray, width: int, height: int):
    """Edge, inclusion and depth functions for (T, 3, 4) clip-space triangles.

    Returns ``(edges, inclusive, depth, ok)``; ``ok`` is False for triangles
    with a singular (zero screen area) vertex matrix.
    """
    c = np.asarray(tri_clip, dtype=np.float64)
    x, y, z, w = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
    V = np.stack([(x + w) * (0.5 * width), (w - y) * (0.5 * height), w], axis=-1)  # (T, 3, 3)
    v0, v1, v2 = V[:, 0], V[:, 1], V[:, 2]
    rows = np.stack([np.cross(v1, v2), np.cross(v2, v0), np.cross(v0, v1)], axis=1)
    det = np.einsum("ij,ij->i", v0, rows[:, 0])
    ok = np.isfinite(det) & (det != 0)
    safe = np.where(ok, det, 1.0)
    edges = rows / safe[:, None, None]
    edges[~ok] = 0.0
    a, b = edges[..., 0], edges[..., 1]
    inclusive = ((a > 0) | ((a == 0) & (b > 0))).astype(np.uint8)
    zc = np.einsum("tij,ti->tj", edges, z)  # NDC z as an affine function
    depth = 0.5 * zc
    depth[:, 2] += 0.5
    return edges, inclusive, depth, ok


def compute_triangle_setup(tri_clip, width: int, height: int, material_id: int = 0) -> TriangleSetup:
    c = np.asarray(tri_clip, dtype=np.float64).reshape(1, 3, 4)
    edges, inclusive, depth, ok = homogeneous_edge_functions(c, width, height)
    xmin, xmax, ymin, ymax, vis = _ndc_bounds(c, ((0, 1), (1, 2), (2, 0)))
    rng, empty = _pixel_range(*_pixel_aabb(xmin, xmax, ymin, ymax, width, height), width, height)
    flags = 0
    if not ok[0]:
        flags |= TRI_DEGENERATE
    if empty[0] or not vis[0]:
        flags |= TRI_BETWEEN
    return TriangleSetup(
        edges=edges[0],
        inclusive=inclusive[0].astype(bool),
        depth=depth[0],
        bounds=tuple(int(v) for v in rng[0]),
        flat_normal=0,
        material_id=material_id,
        cull_flags=flags,
    )


# -- the stage ---------------------------------------------------------------

def _process_chunk(scene: Scene, camera: Camera, config: RenderConfig, start: int, stop: int):
    W, H = camera.width, camera.height
    quads = scene.quads[start:stop]
    n = len(quads)
    P = scene.positions[quads]  # (n, 4, 3)
    clip = clip_positions(P, camera)  # (n, 4, 4)
    corners = np.array(TRI_CORNERS)
    tri_idx = quads[:, corners]  # (n, 2, 3)
    tri_P = P[:, corners]  # (n, 2, 3, 3)
    tri_clip = clip[:, corners]  # (n, 2, 3, 4)

    reason = np.zeros(n, dtype=np.int64)
    tri_cull = np.zeros((n, 2), dtype=np.uint8)

    idx_degen = (
        (tri_idx[..., 0] == tri_idx[..., 1])
        | (tri_idx[..., 1] == tri_idx[..., 2])
        | (tri_idx[..., 0] == tri_idx[..., 2])
    )
    tri_cull[idx_degen] |= TRI_DEGENERATE
    reason[idx_degen.all(axis=1)] = CullReason.DEGENERATE

    normals = np.cross(tri_P[:, :, 1] - tri_P[:, :, 0], tri_P[:, :, 2] - tri_P[:, :, 0])
    if config.backface_culling:
        eye = camera.eye
        facing = np.einsum("qtk,qtk->qt", normals, eye[:3] - eye[3] * tri_P[:, :, 0])
        back = facing <= 0
        tri_cull[back] |= TRI_BACKFACING
        reason[(reason == 0) & back.all(axis=1)] = CullReason.BACKFACING

    outside = _outside_planes(clip)  # (n, 4, 6)
    reason[(reason == 0) & outside.all(axis=1).any(axis=1)] = CullReason.FRUSTUM
    tri_out = _outside_planes(tri_clip).all(axis=2).any(axis=2)
    tri_cull[tri_out] |= TRI_FRUSTUM

    xmin, xmax, ymin, ymax, front = _ndc_bounds(tri_clip, ((0, 1), (1, 2), (2, 0)))
    # in front of the eye, bound the part inside the viewport: tighter near its border
    ahead = (tri_clip[..., 3] > 0).all(axis=-1)
    cxmin, cxmax, cymin, cymax = _clipped_ndc_bounds(tri_clip)
    xmin, xmax = np.where(ahead, cxmin, xmin), np.where(ahead, cxmax, xmax)
    ymin, ymax = np.where(ahead, cymin, ymin), np.where(ahead, cymax, ymax)
    off_view = ahead & ~(cxmin <= cxmax)
    tri_cull[off_view & ~idx_degen] |= TRI_FRUSTUM
    px0, py0, px1, py1 = _pixel_aabb(xmin, xmax, ymin, ymax, W, H)
    tri_rng, tri_empty = _pixel_range(px0, py0, px1, py1, W, H)
    tri_empty |= ~front
    tri_cull[tri_empty] |= TRI_BETWEEN
    reason[(reason == 0) & (off_view | idx_degen).all(axis=1) & ~idx_degen.all(axis=1)] = CullReason.FRUSTUM

    # quad AABB: union of the continuous AABBs of its non-degenerate triangles
    live = ~idx_degen & front
    big = np.inf
    qx0 = np.where(live, px0, big).min(axis=1)
    qy0 = np.where(live, py0, big).min(axis=1)
    qx1 = np.where(live, px1, -big).max(axis=1)
    qy1 = np.where(live, py1, -big).max(axis=1)
    q_rng, q_empty = _pixel_range(qx0, qy0, qx1, qy1, W, H)
    reason[(reason == 0) & q_empty] = CullReason.BETWEEN_SAMPLES

    edges, inclusive, depth, ok = homogeneous_edge_functions(tri_clip.reshape(-1, 3, 4), W, H)
    zero_area = ~ok.reshape(n, 2)
    tri_cull[zero_area] |= TRI_DEGENERATE
    # a quad whose two triangles are both individually culled contributes nothing
    dead = (reason == 0) & (tri_cull != 0).all(axis=1)
    both_geom = ((tri_cull & TRI_DEGENERATE) != 0).all(axis=1)
    reason[dead] = np.where(both_geom[dead], CullReason.DEGENERATE, CullReason.BETWEEN_SAMPLES)

    vis = np.flatnonzero(reason == 0)
    bin_aabb = q_rng[vis] // BIN_SIZE
    nbins = (bin_aabb[:, 2] - bin_aabb[:, 0] + 1) * (bin_aabb[:, 3] - bin_aabb[:, 1] + 1)
    large = nbins > 4

    tv = (vis[:, None] * 2 + np.arange(2)).reshape(-1)
    world_n = normals.reshape(-1, 3)[tv]
    lens = np.linalg.norm(world_n, axis=1, keepdims=True)
    world_n = np.where(lens > 0, world_n / np.where(lens > 0, lens, 1.0), 0.0)
    cull_bits = (tri_cull[vis, 0] != 0).astype(np.int64) | ((tri_cull[vis, 1] != 0).astype(np.int64) << 1)

    mats = scene.quad_material[start:stop][vis]
    needs_color = np.array([m.uses_vertex_colors for m in scene.materials], dtype=bool)[mats]
    needs_normal = np.array([m.uses_vertex_normals for m in scene.materials], dtype=bool)[mats]
    needs_uv = np.array([m.uses_uvs for m in scene.materials], dtype=bool)[mats]
    vq = quads[vis]
    colors = np.zeros((len(vis), 4), dtype=np.uint32)
    colors[needs_color] = packing.pack_color_array(scene.colors[vq[needs_color]])
    vnormals = np.zeros((len(vis), 4), dtype=np.uint32)
    vnormals[needs_normal] = packing.encode_normal_array(scene.normals[vq[needs_normal]])
    uvs = np.zeros((len(vis), 4, 2), dtype=np.float32)
    uvs[needs_uv] = scene.uvs[vq[needs_uv]]

    return dict(
        reason=reason,
        quad_index=vis + start,
        bin_aabb=bin_aabb,
        cull_bits=cull_bits,
        large=large,
        material=mats,
        vertex_colors=colors,
        vertex_normals=vnormals,
        vertex_uvs=uvs,
        tri_edges=edges[tv],
        tri_inclusive=inclusive[tv],
        tri_depth=depth[tv],
        tri_bounds=tri_rng.reshape(-1, 4)[tv],
        tri_cull=tri_cull.reshape(-1)[tv],
        tri_normal=packing.encode_normal_array(world_n),
    )


def classify_quads(scene: Scene, camera: Camera, config: RenderConfig) -> tuple[np.ndarray, np.ndarray]:
    """Cull verdict and size class for every input quad (vectorized)."""
    out = _process_chunk(scene, camera, config, 0, scene.quad_count)
    size = np.full(scene.quad_count, -1, dtype=np.int64)
    size[out["quad_index"]] = out["large"].astype(np.int64)
    return out["reason"], size


def cull_quad(quad: int, scene: Scene, camera: Camera, config: RenderConfig) -> CullResult:
    out = _process_chunk(scene, camera, config, quad, quad + 1)
    reason = CullReason(int(out["reason"][0]))
    if reason != CullReason.VISIBLE:
        return CullResult(reason)
    return CullResult(reason, SizeClass(int(out["large"][0])))


def run_setup(scene: Scene, camera: Camera, config: RenderConfig, pool: ThreadPoolExecutor | None = None) -> SetupResult:
    """Run Stage 1 over 1024-quad chunks and compact the visible quads in input order."""
    bounds = [(s, min(s + CHUNK_SIZE, scene.quad_count)) for s in range(0, scene.quad_count, CHUNK_SIZE)]
    if pool is not None and len(bounds) > 1:
        parts = list(pool.map(lambda b: _process_chunk(scene, camera, config, *b), bounds))
    else:
        parts = [_process_chunk(scene, camera, config, *b) for b in bounds]

    stats = SetupStats(input_quads=scene.quad_count)
    for p in parts:
        for r in CullReason:
            if r != CullReason.VISIBLE:
                stats.culled[r.name.lower()] += int((p["reason"] == r).sum())

    def cat(key, shape, dtype):
        arrs = [p[key] for p in parts]
        if not arrs:
            return np.zeros(shape, dtype=dtype)
        return np.ascontiguousarray(np.concatenate(arrs).astype(dtype, copy=False))

    quad_index = cat("quad_index", (0,), np.int64)
    visible = len(quad_index)
    if visible > config.max_visible_quads or 2 * visible > packing.TRI_INDEX_MAX + 1:
        raise SetupCapacityError(
            f"{visible} visible quads exceed the configured capacity of {config.max_visible_quads}"
        )
    bin_aabb = cat("bin_aabb", (0, 4), np.int32)
    cull_bits = cat("cull_bits", (0,), np.int64)
    large = cat("large", (0,), bool)
    stats.visible_quads = visible
    stats.large_quads = int(large.sum())
    stats.small_quads = visible - stats.large_quads
    return SetupResult(
        width=camera.width,
        height=camera.height,
        quad_index=quad_index,
        bin_aabb_word=packing.pack_bin_aabb_array(bin_aabb, cull_bits),
        bin_aabb=bin_aabb,
        large=large,
        material=cat("material", (0,), np.int32),
        vertex_colors=cat("vertex_colors", (0, 4), np.uint32),
        vertex_normals=cat("vertex_normals", (0, 4), np.uint32),
        vertex_uvs=cat("vertex_uvs", (0, 4, 2), np.float32),
        tri_edges=cat("tri_edges", (0, 3, 3), np.float64),
        tri_inclusive=cat("tri_inclusive", (0, 3), np.uint8),
        tri_depth=cat("tri_depth", (0, 3), np.float64),
        tri_bounds=cat("tri_bounds", (0, 4), np.int32),
        tri_cull=cat("tri_cull", (0,), np.uint8),
        tri_normal=cat("tri_normal", (0,), np.uint32),
        stats=stats,
    )
