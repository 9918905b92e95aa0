"""Stage 2: per-bin primitive lists and bin categorization.

Counting and writing run over the same deterministic partition of batches:
worker ``w`` owns a contiguous run of batches, its per-bin counts reserve a
contiguous slice of every bin list, so each list comes out as
(small quads ascending) followed by (large triangles ascending) for any
worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import RasterLimits
from .scanline import triangle_bins
from .setup import BIN_SIZE, SetupResult

QUAD_BATCH = 1024

EMPTY, LOW, HIGH = 0, 1, 2


class BinningError(RuntimeError):
    """Counted and written primitive totals disagree."""


@dataclass
class BinGrid:
    bins_x: int
    bins_y: int
    quad_counts: np.ndarray  # (B,) int32
    tri_counts: np.ndarray  # (B,) int32
    offsets: np.ndarray  # (B,) int64 exclusive prefix sum of quad + tri counts
    categories: np.ndarray  # (B,) int8
    bin_lists: np.ndarray  # (total,) int32
    bin_size: int = BIN_SIZE

    @property
    def bin_count(self) -> int:
        return self.bins_x * self.bins_y

    def quads_in(self, b: int) -> np.ndarray:
        s = self.offsets[b]
        return self.bin_lists[s : s + self.quad_counts[b]]

    def tris_in(self, b: int) -> np.ndarray:
        s = self.offsets[b] + self.quad_counts[b]
        return self.bin_lists[s : s + self.tri_counts[b]]

    def category_counts(self) -> dict[str, int]:
        return {
            "empty": int((self.categories == EMPTY).sum()),
            "low": int((self.categories == LOW).sum()),
            "high": int((self.categories == HIGH).sum()),
        }


def count_small_quad_bins(setup: SetupResult, quad: int) -> set[tuple[int, int]]:
    """Bins ``(bx, by)`` counted for a small quad: its whole bin AABB (1 to 4 bins, any shape)."""
    x0, y0, x1, y1 = (int(v) for v in setup.bin_aabb[quad])
    return {(x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)}


def rasterize_triangle_bins(setup: SetupResult, tri: int) -> set[tuple[int, int]]:
    """Bins ``(bx, by)`` holding at least one pixel center covered by the triangle."""
    if setup.tri_cull[tri]:
        return set()
    out = np.empty(setup.bins_x * setup.bins_y, dtype=np.int64)
    n = triangle_bins(
        setup.tri_edges[tri], setup.tri_inclusive[tri], setup.tri_bounds[tri], setup.width, setup.height, out
    )
    return {(int(b) % setup.bins_x, int(b) // setup.bins_x) for b in out[:n]}


def compute_offsets_and_categories(quad_counts, tri_counts, limits: RasterLimits | None = None):
    """Exclusive prefix sum of per-bin primitive counts plus empty/low/high categories.

    A small quad counts as two triangles when categorizing.
    """
    limits = limits or RasterLimits()
    qc = np.asarray(quad_counts, dtype=np.int64)
    tc = np.asarray(tri_counts, dtype=np.int64)
    counts = qc + tc
    offsets = np.zeros(len(counts), dtype=np.int64)
    np.cumsum(counts[:-1], out=offsets[1:])
    equiv = 2 * qc + tc
    categories = np.where(equiv == 0, EMPTY, np.where(equiv < limits.low_tris_per_bin, LOW, HIGH)).astype(np.int8)
    return offsets, categories


# -- per-worker passes -------------------------------------------------------

def _small_pairs(setup: SetupResult, quads: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(bin id, quad) pairs for small quads, ordered by quad then bin."""
    if len(quads) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    a = setup.bin_aabb[quads].astype(np.int64)
    bins, owners = [], []
    # <= 4 bins in total, so any 1x4 .. 4x1 shape fits in these offsets
    for dy in range(4):
        for dx in range(4):
            x, y = a[:, 0] + dx, a[:, 1] + dy
            keep = (x <= a[:, 2]) & (y <= a[:, 3])
            bins.append(np.where(keep, y * setup.bins_x + x, -1))
            owners.append(quads)
    b = np.stack(bins, axis=1).reshape(-1)
    o = np.stack(owners, axis=1).reshape(-1)
    keep = b >= 0
    return b[keep], o[keep]


@njit(cache=True, nogil=True)
def _large_pairs(tris, tri_edges, tri_inclusive, tri_bounds, tri_cull, width, height):
    bins_x = (width + 31) // 32
    bins_y = (height + 31) // 32
    scratch = np.empty(bins_x * bins_y, dtype=np.int64)
    total = 0
    for k in range(len(tris)):
        t = tris[k]
        if tri_cull[t] != 0:
            continue
        total += triangle_bins(tri_edges[t], tri_inclusive[t], tri_bounds[t], width, height, scratch)
    bins = np.empty(total, dtype=np.int64)
    owners = np.empty(total, dtype=np.int64)
    n = 0
    for k in range(len(tris)):
        t = tris[k]
        if tri_cull[t] != 0:
            continue
        m = triangle_bins(tri_edges[t], tri_inclusive[t], tri_bounds[t], width, height, scratch)
        for j in range(m):
            bins[n] = scratch[j]
            owners[n] = t
            n += 1
    return bins, owners


def _tri_pairs(setup: SetupResult, tris: np.ndarray):
    return _large_pairs(
        tris.astype(np.int64),
        setup.tri_edges,
        setup.tri_inclusive,
        setup.tri_bounds,
        setup.tri_cull,
        setup.width,
        setup.height,
    )


def _partition(n_items: int, batch: int, workers: int) -> list[tuple[int, int]]:
    """Contiguous item ranges, one per worker, made of whole batches."""
    n_batches = -(-n_items // batch) if n_items else 0
    per = -(-n_batches // workers) if n_batches else 0
    out = []
    for w in range(workers):
        s = min(w * per * batch, n_items)
        e = min((w + 1) * per * batch, n_items)
        out.append((s, e))
    return out


def run_binning(
    setup: SetupResult,
    limits: RasterLimits | None = None,
    workers: int = 1,
    pool: ThreadPoolExecutor | None = None,
) -> BinGrid:
    bins_x, bins_y = setup.bins_x, setup.bins_y
    nb = bins_x * bins_y
    small = np.flatnonzero(~setup.large)
    large_q = np.flatnonzero(setup.large)
    large_t = (large_q[:, None] * 2 + np.arange(2)).reshape(-1)

    quad_parts = _partition(len(small), QUAD_BATCH, workers)
    tri_parts = _partition(len(large_t), max(workers, 1), workers)

    def run(fn, jobs):
        if pool is not None and len(jobs) > 1:
            return list(pool.map(fn, jobs))
        return [fn(j) for j in jobs]

    # phase 1: per-worker counts
    def count_quads(r):
        b, _ = _small_pairs(setup, small[r[0] : r[1]])
        return np.bincount(b, minlength=nb)

    def count_tris(r):
        b, _ = _tri_pairs(setup, large_t[r[0] : r[1]])
        return np.bincount(b, minlength=nb)

    wq = np.array(run(count_quads, quad_parts), dtype=np.int64).reshape(workers, nb)
    wt = np.array(run(count_tris, tri_parts), dtype=np.int64).reshape(workers, nb)
    quad_counts = wq.sum(axis=0)
    tri_counts = wt.sum(axis=0)

    # phase 2: offsets and categories
    offsets, categories = compute_offsets_and_categories(quad_counts, tri_counts, limits)
    total = int(quad_counts.sum() + tri_counts.sum())
    lists = np.full(total, -1, dtype=np.int32)
    quad_base = offsets[None, :] + np.cumsum(wq, axis=0) - wq
    tri_base = offsets[None, :] + quad_counts[None, :] + np.cumsum(wt, axis=0) - wt

    # phase 3: write into slices reserved from the phase-1 counts
    def write(job):
        kind, w, r = job
        if kind == "q":
            b, o = _small_pairs(setup, small[r[0] : r[1]])
            base, expect = quad_base[w], wq[w]
        else:
            b, o = _tri_pairs(setup, large_t[r[0] : r[1]])
            base, expect = tri_base[w], wt[w]
        order = np.argsort(b, kind="stable")
        b, o = b[order], o[order]
        got = np.bincount(b, minlength=nb)
        if not np.array_equal(got, expect):
            raise BinningError(f"worker {w}: written {kind}-primitive counts differ from counted ones")
        start_of_bin = np.cumsum(got) - got
        rank = np.arange(len(b)) - start_of_bin[b]
        lists[base[b] + rank] = o
        return len(b)

    jobs = [("q", w, r) for w, r in enumerate(quad_parts)] + [("t", w, r) for w, r in enumerate(tri_parts)]
    written = sum(run(write, jobs))
    if written != total or (total and lists.min() < 0):
        raise BinningError(f"wrote {written} bin entries, counted {total}")
    return BinGrid(
        bins_x=bins_x,
        bins_y=bins_y,
        quad_counts=quad_counts.astype(np.int32),
        tri_counts=tri_counts.astype(np.int32),
        offsets=offsets,
        categories=categories,
        bin_lists=lists,
    )
