"""End-to-end rendering: setup, binning, low and high rasterization, output."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .binning import LOW, BinGrid, run_binning
from .config import RenderConfig
from .oracle import render_reference_setup
from .raster import (
    OK,
    OVERFLOW_LOW,
    RasterStats,
    compose_background,
    rasterize_bin,
    run_high_raster,
    run_low_raster,
    to_rgba8,
)
from .scene import Camera, Scene
from .setup import SetupResult, run_setup
from .shading import build_shading_tables

ERROR_COLOR = np.array([255, 0, 255, 255], dtype=np.uint8)


@dataclass
class RunReport:
    timings_us: dict[str, float]
    samples: int
    shaded_samples: int
    blended_samples: int
    tri_half_blocks: int
    tri_block_rows: int
    samples_per_thb: float
    segments: int
    input_quads: int
    visible_quads: int
    visible_percent: float
    degenerate_percent: float
    culled: dict[str, int]
    bins: dict[str, int]
    propagated_bins: int
    invalid_pixels: int
    invalid_percent: float
    width: int
    height: int
    renderer: str
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return asdict(self)


@dataclass
class RenderResult:
    accumulation: np.ndarray  # (H, W, 4) premultiplied float32, before the background
    invalid: np.ndarray  # (H, W) bool
    image: np.ndarray  # (H, W, 4) straight-alpha RGBA8
    report: RunReport
    setup: SetupResult | None = None
    grid: BinGrid | None = None


def config_echo(config: RenderConfig) -> dict:
    d = asdict(config)
    d["light_dir"] = list(config.light_dir)
    d["background"] = list(config.background)
    return d


def degenerate_quad_percent(scene: Scene) -> float:
    """Share of input quads that encode a lone triangle (a repeated vertex index)."""
    if scene.quad_count == 0:
        return 0.0
    q = scene.quads
    rep = (q[:, [0, 0, 0, 1, 1, 2]] == q[:, [1, 2, 3, 2, 3, 3]]).any(axis=1)
    return 100.0 * float(rep.sum()) / scene.quad_count


def finish_image(acc: np.ndarray, invalid: np.ndarray, config: RenderConfig) -> np.ndarray:
    img = to_rgba8(compose_background(acc, config.background))
    if config.visualize_errors:
        img[invalid] = ERROR_COLOR
    return img


def _check_viewport(scene: Scene, camera: Camera):
    if camera is None:
        raise ValueError("a camera is required")
    scene.validate()


def render(scene: Scene, camera: Camera, config: RenderConfig | None = None, keep_intermediates: bool = False) -> RenderResult:
    """Render through the tiled pipeline."""
    config = config or RenderConfig()
    _check_viewport(scene, camera)
    clock = time.perf_counter_ns
    t0 = clock()
    pool = ThreadPoolExecutor(config.worker_count) if config.worker_count > 1 else None
    try:
        ts = clock()
        setup = run_setup(scene, camera, config, pool)
        t_setup = clock() - ts

        ts = clock()
        grid = run_binning(setup, config.limits, config.worker_count, pool)
        t_bin = clock() - ts

        tables = build_shading_tables(scene.materials, config.light_dir, config.ambient)
        H, W = camera.height, camera.width
        acc = np.zeros((H, W, 4), dtype=np.float32)
        invalid = np.zeros((H, W), dtype=np.bool_)

        ts = clock()
        low_stats, propagated, n_low = run_low_raster(setup, grid, tables, config, acc, invalid, pool)
        t_low = clock() - ts

        ts = clock()
        high_stats, n_high = run_high_raster(setup, grid, tables, config, acc, invalid, propagated, pool)
        t_high = clock() - ts
    finally:
        if pool is not None:
            pool.shutdown()

    stats = RasterStats()
    stats.add(low_stats)
    stats.add(high_stats)
    image = finish_image(acc, invalid, config)
    t_total = clock() - t0

    n_inv = int(invalid.sum())
    report = RunReport(
        timings_us={
            "setup": t_setup / 1e3,
            "binning": t_bin / 1e3,
            "low_raster": t_low / 1e3,
            "hi_raster": t_high / 1e3,
            "total": t_total / 1e3,
        },
        samples=stats.samples,
        shaded_samples=stats.shaded_samples,
        blended_samples=stats.blended_samples,
        tri_half_blocks=stats.tri_half_blocks,
        tri_block_rows=stats.tri_block_rows,
        samples_per_thb=stats.samples_per_thb,
        segments=stats.segments,
        input_quads=scene.quad_count,
        visible_quads=setup.stats.visible_quads,
        visible_percent=setup.stats.visible_percent,
        degenerate_percent=degenerate_quad_percent(scene),
        culled=dict(setup.stats.culled),
        bins=grid.category_counts(),
        propagated_bins=len(propagated),
        invalid_pixels=n_inv,
        invalid_percent=100.0 * n_inv / invalid.size,
        width=W,
        height=H,
        renderer="pipeline",
        config=config_echo(config),
    )
    return RenderResult(acc, invalid, image, report, setup if keep_intermediates else None,
                        grid if keep_intermediates else None)


def render_oracle(scene: Scene, camera: Camera, config: RenderConfig | None = None) -> RenderResult:
    """Render with the exact per-pixel reference."""
    config = config or RenderConfig()
    _check_viewport(scene, camera)
    clock = time.perf_counter_ns
    t0 = clock()
    setup = run_setup(scene, camera, config)
    t_setup = clock() - t0
    tables = build_shading_tables(scene.materials, config.light_dir, config.ambient)
    ts = clock()
    acc, counts = render_reference_setup(setup, tables, config)
    t_ref = clock() - ts
    invalid = np.zeros(acc.shape[:2], dtype=np.bool_)
    image = finish_image(acc, invalid, config)
    samples = int(counts.sum())
    report = RunReport(
        timings_us={"setup": t_setup / 1e3, "binning": 0.0, "low_raster": t_ref / 1e3, "hi_raster": 0.0,
                    "total": (clock() - t0) / 1e3},
        samples=samples,
        shaded_samples=samples,
        blended_samples=samples,
        tri_half_blocks=0,
        tri_block_rows=0,
        samples_per_thb=0.0,
        segments=0,
        input_quads=scene.quad_count,
        visible_quads=setup.stats.visible_quads,
        visible_percent=setup.stats.visible_percent,
        degenerate_percent=degenerate_quad_percent(scene),
        culled=dict(setup.stats.culled),
        bins={"empty": 0, "low": 0, "high": 0},
        propagated_bins=0,
        invalid_pixels=0,
        invalid_percent=0.0,
        width=camera.width,
        height=camera.height,
        renderer="reference",
        config=config_echo(config),
    )
    return RenderResult(acc, invalid, image, report)


# -- disorder instrumentation -------------------------------------------------

@njit(cache=True)
def _max_left_inversions(keys, pix, n_pixels):
    """Per-pixel max over samples of the number of earlier samples with a larger key."""
    order = np.argsort(pix, kind="mergesort")  # stable: keeps arrival order per pixel
    out = np.zeros(n_pixels, dtype=np.int64)
    i = 0
    n = keys.shape[0]
    while i < n:
        j = i
        p = pix[order[i]]
        while j < n and pix[order[j]] == p:
            j += 1
        m = j - i
        seq = np.empty(m, dtype=np.float64)
        for k in range(m):
            seq[k] = keys[order[i + k]]
        rank = np.empty(m, dtype=np.int64)
        srt = np.argsort(seq)
        for k in range(m):
            rank[srt[k]] = k + 1
        tree = np.zeros(m + 1, dtype=np.int64)
        worst = 0
        for k in range(m):
            # earlier samples with rank <= rank[k]
            s = 0
            r = rank[k]
            while r > 0:
                s += tree[r]
                r -= r & (-r)
            larger = k - s
            if larger > worst:
                worst = larger
            r = rank[k]
            while r <= m:
                tree[r] += 1
                r += r & (-r)
        out[p] = worst
        i = j
    return out


def measure_disorder(scene: Scene, camera: Camera, config: RenderConfig | None = None) -> np.ndarray:
    """(H, W) per-pixel disorder of the pipeline's sample order.

    A depth filter of capacity ``k`` commits a pixel's samples in exact key
    order iff its disorder is at most ``k``.
    """
    config = config or RenderConfig()
    cfg = RenderConfig(**{**config.__dict__, "alpha_threshold": False, "worker_count": 1})
    setup = run_setup(scene, camera, cfg)
    grid = run_binning(setup, cfg.limits, 1)
    tables = build_shading_tables(scene.materials, cfg.light_dir, cfg.ambient)
    H, W = camera.height, camera.width
    # every fragment is recorded exactly once; the reference counts them
    _, counts = render_reference_setup(setup, tables, cfg)
    total = int(counts.sum())
    rec = (np.zeros(total, np.float64), np.zeros(total, np.int64), np.zeros(1, np.int64))
    acc = np.zeros((H, W, 4), dtype=np.float32)
    invalid = np.zeros((H, W), dtype=np.bool_)
    for b in np.flatnonzero(grid.categories != 0):
        high = cfg.force_high_path or grid.categories[b] != LOW
        status = rasterize_bin(int(b), high, setup, grid, tables, cfg, acc, invalid, record=rec)
        if status == OVERFLOW_LOW:
            status = rasterize_bin(int(b), True, setup, grid, tables, cfg, acc, invalid, record=rec)
        if status != OK:
            raise RuntimeError(f"bin {b} failed with status {status}")
    n = int(rec[2][0])
    return _max_left_inversions(rec[0][:n], rec[1][:n], W * H).reshape(H, W)
