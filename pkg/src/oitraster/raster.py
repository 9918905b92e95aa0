"""Stage 3: per-bin rasterization, two-stage sorting and blending.

A 32x32 bin is split into four 32x8 block-rows, sixteen 8x8 blocks and
thirty-two 8x4 half-blocks.

1. Every triangle of the bin list is scanline-converted into tri-block-rows
   (one per covered block-row).
2. Per block, the tri-block-rows touching it become tri-blocks keyed by the
   quantized depth at the centroid of their covered samples (ties broken by
   tri-block-row index) and sorted front to back; each tri-block splits into
   an upper and a lower tri-half-block.  The high path builds each
   half-block's list directly, with the same keys, so both paths produce
   identical sequences.
3. Per half-block, samples are enumerated in sorted tri-half-block order
   (row-major within a triangle), grouped in segments of 256, shaded and
   routed through the per-pixel depth filters.

The low path gives up on a bin (no writes) when one of its limits is
exceeded and returns ``OVERFLOW_LOW`` so the bin is re-run on the high path.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .binning import HIGH, LOW, BinGrid
from .config import RasterLimits, RenderConfig
from .depth_filter import ALPHA_CUTOFF, NO_CUTOFF, flush_and_blend, push_and_blend
from .packing import (
    DEPTH_MAX,
    quantize_depth,
    tbr_col_mask,
    tbr_pack,
    tbr_row,
    tbr_tri_index,
    thb_pack,
    thb_prefix,
    thb_row,
    thb_tri_index,
    unwrap_prefix,
)
from .scanline import row_interval
from .setup import SetupResult
from .shading import ShadingTables, shade_batch

SEGMENT_SIZE = 256
TRI_KEY_SHIFT = 1 << 24  # per-sample key = quantized depth * 2**24 + triangle index

OK = 0
OVERFLOW_LOW = 1
OVERFLOW_HIGH_ROWS = 2
OVERFLOW_HIGH_HALF_BLOCK = 3

# kernel stats slots
ST_SAMPLES = 0
ST_THB = 1
ST_TBR = 2
ST_BLENDED = 3
ST_SEGMENTS = 4
ST_SHADED = 5
ST_TRI_BLOCKS = 6
ST_INVALID = 7
N_STATS = 8


class RasterCapacityError(RuntimeError):
    pass


@njit(cache=True, nogil=True, inline="always")
def depth_at(tri_depth, t, px, py):
    return tri_depth[t, 0] * px + (tri_depth[t, 1] * py + tri_depth[t, 2])


@njit(cache=True, nogil=True)
def sample_key(tri_depth, t, x, y):
    """Total-order key of triangle ``t``'s sample at pixel ``(x, y)``."""
    q = quantize_depth(depth_at(tri_depth, t, x + 0.5, y + 0.5))
    return float(q) * TRI_KEY_SHIFT + t


@njit(cache=True, nogil=True)
def _emit_triangle_rows(t, bx0, by0, width, height, tri_edges, tri_inclusive, tri_bounds,
                        tbr_lo, tbr_hi, tbr_count, limit, begins, lasts):
    """Append this triangle's tri-block-rows; return False when a block-row is full."""
    x0 = max(tri_bounds[t, 0], bx0)
    x1 = min(tri_bounds[t, 2], bx0 + 31)
    y0 = max(tri_bounds[t, 1], by0)
    y1 = min(tri_bounds[t, 3], by0 + 31)
    if x0 > x1 or y0 > y1:
        return True
    edges = tri_edges[t]
    incl = tri_inclusive[t]
    for br in range((y0 - by0) >> 3, ((y1 - by0) >> 3) + 1):
        mask = 0
        for r in range(8):
            y = by0 + br * 8 + r
            lo, hi = 1, 0
            if y0 <= y <= y1:
                lo, hi = row_interval(edges, incl, y, x0, x1)
            if lo <= hi:
                b = lo - bx0
                e = hi - bx0
                begins[r] = b
                lasts[r] = e
                for c in range(b >> 3, (e >> 3) + 1):
                    mask |= 1 << c
            else:
                begins[r] = 31
                lasts[r] = 0
        if mask == 0:
            continue
        n = tbr_count[br]
        if n >= limit:
            return False
        lo_w, hi_w = tbr_pack(begins, lasts, mask, t)
        tbr_lo[br, n] = lo_w
        tbr_hi[br, n] = hi_w
        tbr_count[br] = n + 1
    return True


@njit(cache=True, nogil=True)
def _tri_block_key(lo, hi, bc, bx0, by0, br, tri_depth):
    """Quantized depth at the centroid of a tri-block's covered samples (-1 if empty)."""
    t = tbr_tri_index(hi)
    c0 = bc * 8
    c1 = c0 + 7
    n = 0
    sx = 0.0
    sy = 0.0
    for r in range(8):
        b, e = tbr_row(lo, hi, r)
        b = max(b, c0)
        e = min(e, c1)
        if b <= e:
            m = e - b + 1
            n += m
            sx += m * (bx0 + (b + e) * 0.5 + 0.5)
            sy += m * (by0 + br * 8 + r + 0.5)
    if n == 0:
        return -1
    return quantize_depth(depth_at(tri_depth, t, sx / n, sy / n))


@njit(cache=True, nogil=True)
def _append_half_block(lo, hi, bc, half, thb, thb_count, thb_full, hb, thb_key, key):
    """Append the upper (half=0) or lower (half=1) part of a tri-block; False if empty."""
    begins = np.empty(4, dtype=np.int64)
    lasts = np.empty(4, dtype=np.int64)
    c0 = bc * 8
    frags = 0
    for r in range(4):
        b, e = tbr_row(lo, hi, half * 4 + r)
        b = max(b, c0)
        e = min(e, c0 + 7)
        if b <= e:
            begins[r] = b - c0
            lasts[r] = e - c0
            frags += e - b + 1
        else:
            begins[r] = 7
            lasts[r] = 0
    if frags == 0:
        return False
    n = thb_count[hb]
    thb_full[hb] += frags
    thb[hb, n] = thb_pack(begins, lasts, tbr_tri_index(hi), thb_full[hb])
    thb_key[hb, n] = key
    thb_count[hb] = n + 1
    return True


@njit(cache=True, nogil=True)
def _shade_half_block(hb, bx0, by0, width, height, thb, thb_count, k, alpha_threshold,
                      tri_edges, tri_depth, tri_normal, quad_material, vertex_colors,
                      vertex_normals, vertex_uvs, tables,
                      tile, tile_invalid, stats, record_keys, record_pix, record_n):
    hrow = hb >> 2
    hcol = hb & 3
    ox = bx0 + hcol * 8
    oy = by0 + hrow * 4
    keys = np.empty((32, k), dtype=np.float64)
    cols = np.empty((32, k, 4), dtype=np.float32)
    count = np.zeros(32, dtype=np.int64)
    acc = np.zeros((32, 4), dtype=np.float32)
    max_key = np.full(32, -np.inf)
    invalid = np.zeros(32, dtype=np.bool_)
    blended = np.zeros(32, dtype=np.int64)
    live = np.zeros(32, dtype=np.bool_)
    for p in range(32):
        live[p] = ox + (p & 7) < width and oy + (p >> 3) < height
    cutoff = ALPHA_CUTOFF if alpha_threshold else NO_CUTOFF

    seg_t = np.empty(SEGMENT_SIZE, dtype=np.int64)
    seg_x = np.empty(SEGMENT_SIZE, dtype=np.int64)
    seg_y = np.empty(SEGMENT_SIZE, dtype=np.int64)
    seg_p = np.empty(SEGMENT_SIZE, dtype=np.int64)
    seg_key = np.empty(SEGMENT_SIZE, dtype=np.float64)
    seg_col = np.empty((SEGMENT_SIZE, 4), dtype=np.float32)

    n_thb = thb_count[hb]
    prev = np.int64(0)
    for j in range(n_thb):
        prev = unwrap_prefix(thb_prefix(thb[hb, j]), prev)
    total = prev
    stats[ST_SAMPLES] += total
    stats[ST_THB] += n_thb

    # samples in canonical order: sorted tri-half-blocks, row-major within each
    j = 0
    r = 0
    c = 0
    c_end = -1
    shaded = 0
    while shaded < total:
        m = 0
        while m < SEGMENT_SIZE and shaded + m < total:
            while c > c_end:
                if r == 4:
                    j += 1
                    r = 0
                b, e = thb_row(thb[hb, j], r)
                r += 1
                c = b
                c_end = e
            t = thb_tri_index(thb[hb, j])
            seg_t[m] = t
            seg_x[m] = ox + c
            seg_y[m] = oy + r - 1
            seg_p[m] = (r - 1) * 8 + c
            c += 1
            m += 1
        shade_batch(seg_t, seg_x, seg_y, m, tri_edges, tri_normal, quad_material,
                    vertex_colors, vertex_normals, vertex_uvs, tables, seg_col)
        for i in range(m):
            t = seg_t[i]
            x = seg_x[i]
            y = seg_y[i]
            key = float(quantize_depth(depth_at(tri_depth, t, x + 0.5, y + 0.5))) * TRI_KEY_SHIFT + t
            if record_n.shape[0] > 0:
                ri = record_n[0]
                record_keys[ri] = key
                record_pix[ri] = y * width + x
                record_n[0] = ri + 1
            push_and_blend(keys, cols, count, acc, max_key, invalid, blended, seg_p[i], cutoff, k, key,
                           seg_col[i, 0], seg_col[i, 1], seg_col[i, 2], seg_col[i, 3])
        shaded += m
        stats[ST_SEGMENTS] += 1
        if alpha_threshold and m == SEGMENT_SIZE and shaded < total:
            done = True
            for q in range(32):
                if live[q] and acc[q, 3] < ALPHA_CUTOFF:
                    done = False
                    break
            if done:
                break
    stats[ST_SHADED] += shaded
    for p in range(32):
        flush_and_blend(keys, cols, count, acc, max_key, invalid, blended, p, cutoff)
        ly = hrow * 4 + (p >> 3)
        lx = hcol * 8 + (p & 7)
        for ch in range(4):
            tile[ly, lx, ch] = acc[p, ch]
        tile_invalid[ly, lx] = invalid[p]
        stats[ST_BLENDED] += blended[p]
        if invalid[p]:
            stats[ST_INVALID] += 1


@njit(cache=True, nogil=True)
def build_tri_block_rows(b, bins_x, width, height, bin_lists, offset, n_quads, n_tris,
                         tri_edges, tri_inclusive, tri_bounds, tri_cull, row_limit,
                         tbr_lo, tbr_hi, tbr_count):
    """Phase 1: tri-block-rows of every bin-list triangle, per block-row, in bin-list order.

    Returns False when a block-row would exceed ``row_limit`` records.
    """
    bx0 = (b % bins_x) * 32
    by0 = (b // bins_x) * 32
    begins = np.empty(8, dtype=np.int64)
    lasts = np.empty(8, dtype=np.int64)
    tbr_count[:] = 0
    for i in range(n_quads):
        qd = bin_lists[offset + i]
        for kk in range(2):
            t = 2 * qd + kk
            if tri_cull[t] != 0:
                continue
            if not _emit_triangle_rows(t, bx0, by0, width, height, tri_edges, tri_inclusive, tri_bounds,
                                       tbr_lo, tbr_hi, tbr_count, row_limit, begins, lasts):
                return False
    for i in range(n_tris):
        t = bin_lists[offset + n_quads + i]
        if not _emit_triangle_rows(t, bx0, by0, width, height, tri_edges, tri_inclusive, tri_bounds,
                                   tbr_lo, tbr_hi, tbr_count, row_limit, begins, lasts):
            return False
    return True


@njit(cache=True, nogil=True)
def build_half_blocks(b, bins_x, high, tbr_lo, tbr_hi, tbr_count, tri_depth, block_limit, half_block_limit,
                      thb, thb_count, thb_key):
    """Phase 2: depth-sorted tri-half-blocks for all 32 half-blocks of a bin.

    Tri-blocks are keyed by (quantized centroid depth, tri-block-row index),
    stored as ``depth << 14 | index``.  Returns ``(status, tri-block count)``.
    """
    bx0 = (b % bins_x) * 32
    by0 = (b // bins_x) * 32
    thb_count[:] = 0
    thb_full = np.zeros(32, dtype=np.int64)
    n_tri_blocks = 0
    for blk in range(16):
        br = blk >> 2
        bc = blk & 3
        n = tbr_count[br]
        sel = np.empty(n, dtype=np.int64)
        m = 0
        for i in range(n):
            if (tbr_col_mask(tbr_lo[br, i]) >> bc) & 1:
                sel[m] = i
                m += 1
        if m == 0:
            continue
        if not high and m > block_limit:
            return OVERFLOW_LOW, n_tri_blocks
        sort_keys = np.empty(m, dtype=np.int64)
        for j in range(m):
            i = sel[j]
            q = _tri_block_key(tbr_lo[br, i], tbr_hi[br, i], bc, bx0, by0, br, tri_depth)
            sort_keys[j] = (np.int64(q) << 14) | i
        order = np.argsort(sort_keys)
        n_tri_blocks += m
        for half in range(2):
            hb = (br * 2 + half) * 4 + bc
            for j in range(m):
                i = sel[order[j]]
                _append_half_block(tbr_lo[br, i], tbr_hi[br, i], bc, half, thb, thb_count, thb_full, hb,
                                   thb_key, sort_keys[order[j]])
                if high and thb_count[hb] > half_block_limit:
                    return OVERFLOW_HIGH_HALF_BLOCK, n_tri_blocks
    return OK, n_tri_blocks


@njit(cache=True, nogil=True)
def rasterize_bin_kernel(
    b, high, bins_x, width, height,
    bin_lists, offset, n_quads, n_tris,
    tri_edges, tri_inclusive, tri_depth, tri_bounds, tri_cull, tri_normal,
    quad_material, vertex_colors, vertex_normals, vertex_uvs, tables,
    k, alpha_threshold,
    row_limit, block_limit, half_block_limit,
    tbr_lo, tbr_hi, thb, thb_key,
    color, invalid_mask, stats,
    record_keys, record_pix, record_n,
):
    """Rasterize one bin into ``color`` / ``invalid_mask``.

    Returns a status code; nothing is written unless it is ``OK``.
    """
    bx0 = (b % bins_x) * 32
    by0 = (b // bins_x) * 32
    tbr_count = np.zeros(4, dtype=np.int64)
    if not build_tri_block_rows(b, bins_x, width, height, bin_lists, offset, n_quads, n_tris,
                                tri_edges, tri_inclusive, tri_bounds, tri_cull, row_limit,
                                tbr_lo, tbr_hi, tbr_count):
        return OVERFLOW_HIGH_ROWS if high else OVERFLOW_LOW

    thb_count = np.zeros(32, dtype=np.int64)
    status, n_tri_blocks = build_half_blocks(b, bins_x, high, tbr_lo, tbr_hi, tbr_count, tri_depth,
                                             block_limit, half_block_limit, thb, thb_count, thb_key)
    if status != OK:
        return status

    # phase 3: shading and blending into a private tile
    tile = np.zeros((32, 32, 4), dtype=np.float32)
    tile_invalid = np.zeros((32, 32), dtype=np.bool_)
    local = np.zeros(N_STATS, dtype=np.int64)
    local[ST_TBR] = tbr_count.sum()
    local[ST_TRI_BLOCKS] = n_tri_blocks
    for hb in range(32):
        if thb_count[hb] == 0:
            continue
        _shade_half_block(hb, bx0, by0, width, height, thb, thb_count, k, alpha_threshold,
                          tri_edges, tri_depth, tri_normal, quad_material, vertex_colors,
                          vertex_normals, vertex_uvs, tables,
                          tile, tile_invalid, local, record_keys, record_pix, record_n)

    for ly in range(min(32, height - by0)):
        for lx in range(min(32, width - bx0)):
            for c in range(4):
                color[by0 + ly, bx0 + lx, c] = tile[ly, lx, c]
            invalid_mask[by0 + ly, bx0 + lx] = tile_invalid[ly, lx]
    for i in range(N_STATS):
        stats[i] += local[i]
    return OK


# -- driver ------------------------------------------------------------------

@dataclass
class RasterStats:
    samples: int = 0
    shaded_samples: int = 0
    blended_samples: int = 0
    tri_half_blocks: int = 0
    tri_block_rows: int = 0
    tri_blocks: int = 0
    segments: int = 0
    invalid_pixels: int = 0
    low_bins: int = 0
    high_bins: int = 0
    propagated_bins: list[int] = field(default_factory=list)

    @property
    def samples_per_thb(self) -> float:
        return self.samples / self.tri_half_blocks if self.tri_half_blocks else 0.0

    def add(self, arr: np.ndarray):
        self.samples += int(arr[ST_SAMPLES])
        self.shaded_samples += int(arr[ST_SHADED])
        self.blended_samples += int(arr[ST_BLENDED])
        self.tri_half_blocks += int(arr[ST_THB])
        self.tri_block_rows += int(arr[ST_TBR])
        self.tri_blocks += int(arr[ST_TRI_BLOCKS])
        self.segments += int(arr[ST_SEGMENTS])
        self.invalid_pixels += int(arr[ST_INVALID])


class _Worker:
    """Per-thread scratch buffers, sized for the high path."""

    def __init__(self, limits: RasterLimits):
        self.tbr_lo = np.zeros((4, limits.high_block_row_records), dtype=np.int64)
        self.tbr_hi = np.zeros((4, limits.high_block_row_records), dtype=np.int64)
        cap = max(limits.high_half_block_records, limits.high_block_row_records) + 1
        self.thb = np.zeros((32, cap), dtype=np.int64)
        self.thb_key = np.zeros((32, cap), dtype=np.int64)
        self.stats = np.zeros(N_STATS, dtype=np.int64)


_NO_RECORD_F = np.zeros(0, dtype=np.float64)
_NO_RECORD_I = np.zeros(0, dtype=np.int64)


def rasterize_bin(
    b: int,
    high: bool,
    setup: SetupResult,
    grid: BinGrid,
    tables: ShadingTables,
    config: RenderConfig,
    color: np.ndarray,
    invalid: np.ndarray,
    worker: _Worker | None = None,
    record=None,
) -> int:
    """Run one bin through the low or high path; returns the kernel status."""
    worker = worker or _Worker(config.limits)
    lim = config.limits
    rk, rp, rn = record if record is not None else (_NO_RECORD_F, _NO_RECORD_I, _NO_RECORD_I)
    return rasterize_bin_kernel(
        b, high, grid.bins_x, setup.width, setup.height,
        grid.bin_lists, int(grid.offsets[b]), int(grid.quad_counts[b]), int(grid.tri_counts[b]),
        setup.tri_edges, setup.tri_inclusive, setup.tri_depth, setup.tri_bounds, setup.tri_cull, setup.tri_normal,
        setup.material, setup.vertex_colors, setup.vertex_normals, setup.vertex_uvs, tables.as_tuple(),
        config.depth_filter_size, config.alpha_threshold,
        lim.high_block_row_records if high else lim.low_block_row_records,
        lim.low_block_tris,
        lim.high_half_block_records,
        worker.tbr_lo, worker.tbr_hi, worker.thb, worker.thb_key,
        color, invalid, worker.stats,
        rk, rp, rn,
    )


def scanline_row_interval(tri, y: int, x0: int, x1: int):
    """Covered pixels ``(lo, hi)`` of row ``y`` within ``[x0, x1]`` for a :class:`TriangleSetup`, or None."""
    lo, hi = row_interval(np.asarray(tri.edges, np.float64), np.asarray(tri.inclusive, np.uint8), y, x0, x1)
    return (int(lo), int(hi)) if lo <= hi else None


def generate_tri_block_rows(setup: SetupResult, grid: BinGrid, b: int, row_limit: int | None = None):
    """Phase 1 for bin ``b``: four lists of packed 128-bit tri-block-rows.

    Returns ``(rows, ok)``; ``ok`` is False when a block-row exceeded ``row_limit``.
    """
    limit = row_limit or RasterLimits().low_block_row_records
    lo = np.zeros((4, limit), dtype=np.int64)
    hi = np.zeros((4, limit), dtype=np.int64)
    count = np.zeros(4, dtype=np.int64)
    ok = build_tri_block_rows(
        b, grid.bins_x, setup.width, setup.height, grid.bin_lists, int(grid.offsets[b]),
        int(grid.quad_counts[b]), int(grid.tri_counts[b]), setup.tri_edges, setup.tri_inclusive,
        setup.tri_bounds, setup.tri_cull, limit, lo, hi, count,
    )
    rows = [
        [(int(lo[r, i]) & 0xFFFFFFFFFFFFFFFF) | (int(hi[r, i]) << 64) for i in range(count[r])]
        for r in range(4)
    ]
    return rows, bool(ok)


def extract_half_blocks(setup: SetupResult, grid: BinGrid, b: int, high: bool = False,
                        limits: RasterLimits | None = None):
    """Phases 1-2 for bin ``b``.

    Returns ``(status, half_blocks, keys)``: per half-block (index
    ``half_row * 4 + column``) the packed tri-half-blocks in blending order
    and their tri-block sort keys ``(depth, tri-block-row index)``.
    """
    limits = limits or RasterLimits()
    w = _Worker(limits)
    count = np.zeros(4, dtype=np.int64)
    row_limit = limits.high_block_row_records if high else limits.low_block_row_records
    ok = build_tri_block_rows(
        b, grid.bins_x, setup.width, setup.height, grid.bin_lists, int(grid.offsets[b]),
        int(grid.quad_counts[b]), int(grid.tri_counts[b]), setup.tri_edges, setup.tri_inclusive,
        setup.tri_bounds, setup.tri_cull, row_limit, w.tbr_lo, w.tbr_hi, count,
    )
    if not ok:
        return (OVERFLOW_HIGH_ROWS if high else OVERFLOW_LOW), [], []
    thb_count = np.zeros(32, dtype=np.int64)
    status, _ = build_half_blocks(
        b, grid.bins_x, high, w.tbr_lo, w.tbr_hi, count, setup.tri_depth,
        limits.low_block_tris, limits.high_half_block_records, w.thb, thb_count, w.thb_key,
    )
    blocks = [[int(v) for v in w.thb[hb, : thb_count[hb]]] for hb in range(32)]
    keys = [[(int(v) >> 14, int(v) & 0x3FFF) for v in w.thb_key[hb, : thb_count[hb]]] for hb in range(32)]
    return int(status), blocks, keys


def _run_queue(bins, high, setup, grid, tables, config, color, invalid, pool, workers):
    """Workers pull bins from a shared queue until it is empty."""
    counter = itertools.count()
    lock = threading.Lock()
    bins = list(bins)

    def loop():
        w = _Worker(config.limits)
        results = []
        while True:
            with lock:
                i = next(counter)
            if i >= len(bins):
                break
            b = bins[i]
            results.append((b, rasterize_bin(b, high, setup, grid, tables, config, color, invalid, w)))
        return w.stats, results

    if pool is None or workers == 1:
        outs = [loop()]
    else:
        futures = [pool.submit(loop) for _ in range(workers)]
        outs = [f.result() for f in futures]
    stats = np.zeros(N_STATS, dtype=np.int64)
    status = {}
    for s, res in outs:
        stats += s
        status.update(res)
    return stats, status


def run_low_raster(setup, grid, tables, config, color, invalid, pool=None):
    """Low-path bins; returns (stats array, bins to propagate to the high path)."""
    low = [] if config.force_high_path else np.flatnonzero(grid.categories == LOW).tolist()
    stats, status = _run_queue(low, False, setup, grid, tables, config, color, invalid, pool, config.worker_count)
    overflow = sorted(b for b, s in status.items() if s == OVERFLOW_LOW)
    return stats, overflow, len(low)


def run_high_raster(setup, grid, tables, config, color, invalid, extra_bins=(), pool=None):
    if config.force_high_path:
        bins = np.flatnonzero(grid.categories != 0).tolist()
    else:
        bins = sorted(set(np.flatnonzero(grid.categories == HIGH).tolist()) | set(extra_bins))
    stats, status = _run_queue(bins, True, setup, grid, tables, config, color, invalid, pool, config.worker_count)
    for b in sorted(status):
        s = status[b]
        if s == OVERFLOW_HIGH_ROWS:
            raise RasterCapacityError(
                f"bin {b}: more than {config.limits.high_block_row_records} tri-block-rows in a block-row"
            )
        if s == OVERFLOW_HIGH_HALF_BLOCK:
            raise RasterCapacityError(
                f"bin {b}: more than {config.limits.high_half_block_records} tri-half-blocks in a half-block"
            )
    return stats, len(bins)


def compose_background(acc: np.ndarray, background) -> np.ndarray:
    """Premultiplied accumulation over a straight-alpha background, float32."""
    bg = np.asarray(background, dtype=np.float32)
    bg_p = np.array([bg[0] * bg[3], bg[1] * bg[3], bg[2] * bg[3], bg[3]], dtype=np.float32)
    t = np.float32(1.0) - acc[..., 3:4]
    return acc + t * bg_p


def to_rgba8(premul: np.ndarray) -> np.ndarray:
    """Premultiplied float image -> straight-alpha RGBA8."""
    a = premul[..., 3:4]
    with np.errstate(divide="ignore", invalid="ignore"):
        rgb = np.where(a > 0, premul[..., :3] / np.where(a > 0, a, 1), 0)
    out = np.concatenate([rgb, a], axis=-1)
    return np.clip(np.floor(out * np.float32(255.0) + np.float32(0.5)), 0, 255).astype(np.uint8)


__all__ = [
    "DEPTH_MAX",
    "extract_half_blocks",
    "generate_tri_block_rows",
    "scanline_row_interval",
    "RasterCapacityError",
    "RasterStats",
    "rasterize_bin",
    "run_low_raster",
    "run_high_raster",
    "sample_key",
    "compose_background",
    "to_rgba8",
]
