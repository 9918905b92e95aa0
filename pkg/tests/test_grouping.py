from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oitraster.grouping import build_candidate_graph, greedy_mis_pairing, group_quads, quad_from_pair
from oitraster.scene import Material, Scene


def grid_triangles(nx, ny, alternate=False):
    tris = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            if alternate and (i + j) % 2:
                tris += [[a, b, d], [b, c, d]]
            else:
                tris += [[a, b, c], [a, c, d]]
    return np.array(tris)


def seeded_mesh(seed=7, nx=50, ny=100):
    """10k triangles of a grid with shuffled triangle order and a few dropped cells."""
    rng = np.random.default_rng(seed)
    tris = grid_triangles(nx, ny, alternate=True)
    tris = tris[rng.permutation(len(tris))]
    return np.array([np.roll(t, rng.integers(3)) for t in tris])


def check_invariants(tris, graph, quads, sources):
    used = Counter()
    for a, b in sources.tolist():
        used[a] += 1
        if b >= 0:
            used[b] += 1
    # coverage and independence: every triangle in exactly one quad
    assert sorted(used) == list(range(len(tris)))
    assert all(v == 1 for v in used.values())
    # maximality: each unselected candidate shares a triangle with a selected one
    paired = {a for a, b in sources.tolist() if b >= 0} | {b for a, b in sources.tolist() if b >= 0}
    selected = {tuple(s) for s in sources.tolist() if s[1] >= 0}
    for node in graph.nodes:
        if node not in selected:
            assert node[0] in paired or node[1] in paired
    # each quad reproduces its source triangles
    for q, (a, b) in zip(quads.tolist(), sources.tolist()):
        t0, t1 = [q[0], q[1], q[2]], [q[0], q[2], q[3]]
        assert sorted(t0) == sorted(tris[a]) or b < 0 and t0 == list(tris[a])
        if b >= 0:
            assert sorted(t1) == sorted(tris[b])


def test_graph_examples():
    g = build_candidate_graph([[0, 1, 2], [1, 3, 2]])
    assert len(g.nodes) == 1 and g.edge_count == 0
    g = build_candidate_graph([[0, 1, 2]])
    assert len(g.nodes) == 0
    # A-B and B-C share edges, A and C do not
    g = build_candidate_graph([[0, 1, 2], [1, 3, 2], [1, 4, 3]])
    assert len(g.nodes) == 2 and g.edge_count == 1


def test_pairing_examples():
    tris = np.array([[0, 1, 2], [1, 3, 2]])
    quads, _, stats = greedy_mis_pairing(build_candidate_graph(tris), tris)
    assert stats.quads == 1 and stats.degenerate_percent == 0.0

    tris = np.array([[0, 1, 2]])
    quads, _, stats = greedy_mis_pairing(build_candidate_graph(tris), tris)
    assert quads.tolist() == [[0, 1, 2, 2]] and stats.degenerate_percent == 100.0


def test_strip_pairs_ends_first():
    # A-B, B-C, C-D share edges
    tris = np.array([[0, 1, 2], [1, 3, 2], [2, 3, 4], [3, 5, 4]])
    _, sources, stats = greedy_mis_pairing(build_candidate_graph(tris), tris)
    assert sorted(map(tuple, sources.tolist())) == [(0, 1), (2, 3)]
    assert stats.degenerate_percent == 0.0


def test_quad_from_pair_keeps_winding():
    a, b = [4, 7, 9], [9, 7, 2]
    q = quad_from_pair(a, b)
    assert {q[0], q[2]} == {7, 9}
    t0 = [q[0], q[1], q[2]]
    # same cyclic order as a
    assert any(t0 == a[i:] + a[:i] for i in range(3))
    assert sorted([q[0], q[2], q[3]]) == sorted(b)


@pytest.mark.parametrize("shape", [(1, 1), (4, 4), (7, 3), (40, 25)])
@pytest.mark.parametrize("alternate", [False, True])
def test_regular_grid_has_no_degenerate_quads(shape, alternate):
    tris = grid_triangles(*shape, alternate=alternate)
    graph = build_candidate_graph(tris)
    quads, sources, stats = greedy_mis_pairing(graph, tris)
    assert stats.degenerate_percent == 0.0
    check_invariants(tris, graph, quads, sources)


def test_large_mesh_invariants():
    tris = seeded_mesh()
    assert len(tris) == 10_000
    graph = build_candidate_graph(tris)
    quads, sources, stats = greedy_mis_pairing(graph, tris)
    check_invariants(tris, graph, quads, sources)
    assert stats.paired * 2 + stats.degenerate == 10_000
    assert stats.degenerate_percent < 1.0


@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(1, 8))
def test_random_subsets_of_grids(seed, nx, ny):
    rng = np.random.default_rng(seed)
    tris = grid_triangles(nx, ny, alternate=bool(seed % 2))
    tris = tris[rng.random(len(tris)) < 0.7]
    tris = tris[rng.permutation(len(tris))]
    graph = build_candidate_graph(tris)
    quads, sources, _ = greedy_mis_pairing(graph, tris)
    check_invariants(tris, graph, quads, sources)


def test_deterministic():
    tris = seeded_mesh(3, 20, 20)
    a = greedy_mis_pairing(build_candidate_graph(tris), tris)
    b = greedy_mis_pairing(build_candidate_graph(tris), tris)
    assert np.array_equal(a[0], b[0])


def test_group_quads_keeps_materials_apart():
    tris = grid_triangles(2, 1)  # 4 triangles
    nx = 2
    pos = np.array([(i, j, 0.0) for j in range(2) for i in range(nx + 1)])
    quads = np.concatenate([tris, tris[:, 2:]], axis=1)
    scene = Scene(pos, quads, [0, 1, 0, 1], [Material("a"), Material("b")])
    grouped, stats = group_quads(scene)
    assert stats.triangles == 4
    assert grouped.quad_count == stats.quads == 4
    assert stats.degenerate_percent == 100.0
    same = Scene(pos, quads, [0, 0, 0, 0], [Material()])
    grouped, stats = group_quads(same)
    assert grouped.quad_count == 2 and stats.degenerate == 0
