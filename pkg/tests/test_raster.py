import numpy as np
import pytest
from conftest import numpy_coverage, screen_camera, screen_scene

from oitraster.binning import HIGH, run_binning
from oitraster.config import RasterLimits, RenderConfig
from oitraster.oracle import compare_images
from oitraster.packing import column_mask, quantize_depth, unpack_tri_block_row, unpack_tri_half_block, unwrap_prefix
from oitraster.pipeline import measure_disorder, render, render_oracle
from oitraster.raster import (
    OK,
    OVERFLOW_LOW,
    RasterCapacityError,
    extract_half_blocks,
    generate_tri_block_rows,
)
from oitraster.scene import Material
from oitraster.setup import run_setup
from oitraster.synthetic import default_camera, generate_synthetic_scene

CFG = RenderConfig()
HUGE = ((-1000.0, -1000.0), (3000.0, -1000.0), (-1000.0, 3000.0))


def binned(scene, cam, config=CFG):
    setup = run_setup(scene, cam, config)
    return setup, run_binning(setup, config.limits)


def stacked_layers(n, width=32, height=32, alpha=0.05, seed=0):
    """``n`` viewport-covering triangles at distinct depths, in shuffled order."""
    rng = np.random.default_rng(seed)
    depths = rng.permutation(np.linspace(-0.9, 0.9, n))
    mats = [Material(f"m{i}", tuple(rng.uniform(0.2, 1, 3)) + (1.0,), alpha) for i in range(8)]
    scenes = [screen_scene([HUGE], width, height, z=z) for z in depths]
    pos = np.concatenate([s.positions for s in scenes])
    quads = np.concatenate([s.quads + 3 * i for i, s in enumerate(scenes)])
    from oitraster.scene import Scene

    return Scene(pos, quads, rng.integers(0, 8, n), mats)


def test_single_pixel_tri_block_row():
    cam = screen_camera(32, 32)
    setup, grid = binned(screen_scene([((0.2, 0.2), (1.0, 0.2), (0.2, 1.0))], 32, 32), cam)
    rows, ok = generate_tri_block_rows(setup, grid, 0)
    assert ok and [len(r) for r in rows] == [1, 0, 0, 0]
    intervals, mask, tri = unpack_tri_block_row(rows[0][0])
    assert intervals[0] == (0, 0)
    assert all(iv == (31, 0) for iv in intervals[1:])
    assert mask == 0b0001 and tri == 0


def test_full_bin_quad_gives_eight_records():
    cam = screen_camera(32, 32)
    from conftest import screen_quads

    scene = screen_quads([(-1, -1, 33, 33)], 32, 32, [0.0], [Material()], [0])
    setup, grid = binned(scene, cam)
    rows, ok = generate_tri_block_rows(setup, grid, 0)
    assert ok and [len(r) for r in rows] == [2, 2, 2, 2]
    for block_row in rows:
        masks = []
        for rec in block_row:
            intervals, mask, _ = unpack_tri_block_row(rec)
            assert mask == column_mask([b for b, _ in intervals], [e for _, e in intervals])
            masks.append(mask)
        assert masks[0] | masks[1] == 0b1111
    # the two triangles together cover every pixel exactly once
    for block_row in rows:
        cover = np.zeros((8, 32), int)
        for rec in block_row:
            for r, (b, e) in enumerate(unpack_tri_block_row(rec)[0]):
                if b <= e:
                    cover[r, b : e + 1] += 1
        assert (cover == 1).all()


def tiny_triangles(n, width=32, height=32, seed=0):
    rng = np.random.default_rng(seed)
    tris = []
    for _ in range(n):
        x, y = rng.integers(0, 32), rng.integers(0, 8)
        tris.append(((x + 0.2, y + 0.2), (x + 1.0, y + 0.2), (x + 0.2, y + 1.0)))
    return screen_scene(tris, width, height)


def test_block_row_overflow_flags_bin():
    cam = screen_camera(32, 32)
    setup, grid = binned(tiny_triangles(1025), cam)
    _, ok = generate_tri_block_rows(setup, grid, 0)
    assert not ok
    rows, ok = generate_tri_block_rows(setup, grid, 0, row_limit=2048)
    assert ok and len(rows[0]) == 1025


def test_near_before_far_and_index_tie_break():
    cam = screen_camera(32, 32)
    left = ((0.1, 0.1), (3.9, 0.1), (0.1, 3.9))
    right = ((4.1, 0.1), (7.9, 0.1), (4.1, 3.9))
    scene = screen_scene([right, left], 32, 32)
    scene.positions[:3, 2] = 0.5  # far: depth 0.75
    scene.positions[3:, 2] = -0.5  # near: depth 0.25
    setup, grid = binned(scene, cam)
    status, blocks, keys = extract_half_blocks(setup, grid, 0)
    assert status == OK
    tris = [unpack_tri_half_block(v)[1] for v in blocks[0]]
    assert tris == [2, 0]
    assert keys[0][0][0] == quantize_depth(0.25) and keys[0][1][0] == quantize_depth(0.75)
    # equal depths: tri-block-row order decides
    scene.positions[:, 2] = 0.0
    setup, grid = binned(scene, cam)
    _, blocks, keys = extract_half_blocks(setup, grid, 0)
    assert [unpack_tri_half_block(v)[1] for v in blocks[0]] == [0, 2]
    assert keys[0][0][0] == keys[0][1][0]


def centroid_key(setup, t, bx0, by0, block):
    cov = numpy_coverage(setup.tri_edges[t], setup.tri_inclusive[t], setup.width, setup.height)
    ox, oy = bx0 + (block & 3) * 8, by0 + (block >> 2) * 8
    ys, xs = np.nonzero(cov[oy : oy + 8, ox : ox + 8])
    cx, cy = ox + xs.mean() + 0.5, oy + ys.mean() + 0.5
    d = setup.tri_depth[t]
    return d[0] * cx + d[1] * cy + d[2]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_half_block_order_follows_centroid_depth(seed):
    """Random stacks of 100 translucent quads: order equals a reference sort by centroid depth."""
    rng = np.random.default_rng(seed)
    cam = default_camera(64, 64)
    from oitraster.synthetic import _unproject
    from oitraster.scene import Scene

    pos, quads = [], []
    for _ in range(100):
        d = rng.uniform(2, 8, 4)
        x0, y0 = rng.uniform(-4, 20, 2)
        w, h = rng.uniform(10, 30, 2)
        b = len(pos)
        pos += [_unproject(x, y, dd, 64, 64) for (x, y), dd in zip(((x0, y0 + h), (x0 + w, y0 + h), (x0 + w, y0), (x0, y0)), d)]
        quads.append([b, b + 1, b + 2, b + 3])
    scene = Scene(np.array(pos), np.array(quads), np.zeros(100, int), [Material(opacity=0.3)])
    setup, grid = binned(scene, cam, RenderConfig(limits=RasterLimits()))
    status, blocks, keys = extract_half_blocks(setup, grid, 0, high=True)
    assert status == OK
    checked = 0
    for hb in range(32):
        if not blocks[hb]:
            continue
        block = (hb >> 3) * 4 + (hb & 3)
        tris = [unpack_tri_half_block(v)[1] for v in blocks[hb]]
        ref = sorted(tris, key=lambda t: (quantize_depth(centroid_key(setup, t, 0, 0, block)), keys[hb][tris.index(t)][1]))
        assert tris == ref
        full = [centroid_key(setup, t, 0, 0, block) for t in tris]
        # full-precision depths are non-decreasing up to the quantization step
        assert all(b >= a - 2.0 ** -22 for a, b in zip(full, full[1:]))
        checked += 1
    assert checked >= 16


@pytest.mark.parametrize("kind", ["random_soup", "dense_bin", "intersecting_shells"])
def test_sorted_keys_prefix_sums_and_coverage_partition(kind):
    scene = generate_synthetic_scene(kind, 4)
    setup, grid = binned(scene, default_camera(256, 256))
    busy = np.argsort(grid.quad_counts + grid.tri_counts)[-6:]
    for b in busy:
        high = grid.categories[b] == HIGH
        status, blocks, keys = extract_half_blocks(setup, grid, int(b), high=True)
        assert status == OK
        bx0, by0 = (b % grid.bins_x) * 32, (b // grid.bins_x) * 32
        per_tri = {}
        for hb in range(32):
            ks = keys[hb]
            assert all(a <= c for a, c in zip(ks, ks[1:]))
            prev = 0
            for v in blocks[hb]:
                rows, t, stored = unpack_tri_half_block(v)
                n = sum(e - s + 1 for s, e in rows if s <= e)
                assert n > 0
                full = unwrap_prefix(stored, prev)
                assert full == prev + n
                prev = full
                per_tri[t] = per_tri.get(t, 0) + n
        # each triangle's fragments in the bin are accounted for exactly once
        listed = set(grid.tris_in(b).tolist())
        for v in grid.quads_in(b).tolist():
            listed |= {2 * v, 2 * v + 1}
        assert set(per_tri) <= listed
        for t in listed:
            cov = numpy_coverage(setup.tri_edges[t], setup.tri_inclusive[t], setup.width, setup.height)
            expected = 0 if setup.tri_cull[t] else cov[by0 : by0 + 32, bx0 : bx0 + 32].sum()
            assert per_tri.get(t, 0) == expected
        if not high:
            status_low, blocks_low, _ = extract_half_blocks(setup, grid, int(b))
            if status_low == OK:
                assert blocks_low == blocks


def test_three_hundred_layers_segments():
    scene = stacked_layers(300)
    cam = screen_camera(32, 32)
    res = render(scene, cam, RenderConfig(depth_filter_size=3))
    assert res.report.samples == 300 * 1024
    assert res.report.samples / res.report.tri_half_blocks == 32
    assert res.report.segments == 32 * 38  # 9600 = 37 * 256 + 128 per half-block
    assert res.report.propagated_bins == 1  # > 256 tri-blocks per block
    assert compare_images(res.image, render_oracle(scene, cam).image).identical


def test_opaque_front_with_threshold_blends_once():
    scene = stacked_layers(40, alpha=0.5, seed=3)
    front = int(np.argmin(scene.positions[::3, 2]))
    scene.materials.append(Material("front", (0.9, 0.3, 0.1, 1.0), 1.0))
    scene.quad_material[front] = len(scene.materials) - 1
    cam = screen_camera(32, 32)
    on = render(scene, cam, RenderConfig(alpha_threshold=True))
    off = render(scene, cam, RenderConfig())
    assert on.report.blended_samples == 32 * 32
    assert compare_images(on.image, off.image).identical


def test_single_opaque_triangle_matches_material():
    cam = screen_camera(32, 32)
    scene = screen_scene([HUGE], 32, 32, materials=[Material("m", (0.2, 0.6, 1.0, 1.0), 1.0)])
    res = render(scene, cam, RenderConfig(light_dir=(0, 0, -1)))
    assert res.report.samples == 1024 and res.report.segments == 32
    assert compare_images(res.image, render_oracle(scene, cam, RenderConfig(light_dir=(0, 0, -1))).image).identical
    assert (res.image[..., :3] == np.round(np.array([0.2, 0.6, 1.0]) * 255)).all()


def test_empty_bins_keep_background():
    cam = screen_camera(96, 64)
    scene = screen_scene([((2, 2), (20, 2), (2, 20))], 96, 64)
    res = render(scene, cam, RenderConfig(background=(0.25, 0.5, 0.75, 1.0)))
    assert res.report.bins["empty"] == 5
    expected = np.round(np.array([0.25, 0.5, 0.75, 1.0]) * 255)
    assert (res.image[:, 40:] == expected).all()
    assert (res.image[32:] == expected).all()


def test_low_bin_stays_on_low_path():
    scene = generate_synthetic_scene("random_soup", 1, n=300)
    cam = default_camera(128, 128)
    res = render(scene, cam)
    assert res.report.bins["high"] == 0 and res.report.propagated_bins == 0
    assert res.report.timings_us["hi_raster"] < res.report.timings_us["low_raster"]


def test_block_with_too_many_tri_blocks_propagates():
    scene = generate_synthetic_scene("block_overflow", 0)
    cam = default_camera()
    setup, grid = binned(scene, cam)
    b = int(np.argmax(grid.tri_counts + grid.quad_counts))
    assert extract_half_blocks(setup, grid, b)[0] == OVERFLOW_LOW
    assert extract_half_blocks(setup, grid, b, high=True)[0] == OK
    k = int(measure_disorder(scene, cam).max())
    res = render(scene, cam, RenderConfig(depth_filter_size=max(k, 1)))
    assert res.report.propagated_bins == 1
    assert compare_images(res.image, render_oracle(scene, cam).image).identical


def test_five_thousand_triangle_bin_matches_oracle():
    scene = generate_synthetic_scene("dense_bin", 2, n=2500)
    cam = default_camera()
    setup, grid = binned(scene, cam)
    assert (2 * grid.quad_counts + grid.tri_counts).max() >= 5000
    k = int(measure_disorder(scene, cam).max())
    res = render(scene, cam, RenderConfig(depth_filter_size=max(k, 1)))
    assert res.report.bins["high"] >= 1
    assert compare_images(res.image, render_oracle(scene, cam).image).identical


def test_high_path_overflow_is_an_error():
    scene = stacked_layers(300)
    limits = RasterLimits(high_half_block_records=256)
    with pytest.raises(RasterCapacityError, match="bin 0"):
        render(scene, screen_camera(32, 32), RenderConfig(limits=limits))


def test_invalid_pixels_non_increasing_in_filter_size():
    scene = generate_synthetic_scene("intersecting_shells", 1)
    cam = default_camera(256, 256)
    counts = [render(scene, cam, RenderConfig(depth_filter_size=k)).report.invalid_pixels for k in (1, 2, 3, 5, 8, 12)]
    assert counts[0] > 0
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_visualize_errors_paints_invalid_pixels():
    scene = generate_synthetic_scene("intersecting_shells", 1)
    cam = default_camera(256, 256)
    res = render(scene, cam, RenderConfig(depth_filter_size=1, visualize_errors=True))
    assert res.invalid.any()
    assert (res.image[res.invalid] == [255, 0, 255, 255]).all()
