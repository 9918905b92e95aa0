"""Pair the triangles of a mesh into quads with a greedy maximal independent set.

Candidates (pairs of triangles sharing an edge) are graph nodes; two
candidates conflict when they share a triangle.  The candidate of lowest
degree in the remaining graph is taken (ties broken by triangle indices),
then it and its conflicting candidates leave the graph.  Unpaired triangles
become degenerate quads.
"""
from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass

import numpy as np


@dataclass
class QuadCandidateGraph:
    nodes: list[tuple[int, int]]  # (tri_a, tri_b) with tri_a < tri_b
    shared_edges: list[tuple[int, int]]  # vertex pair shared by each candidate
    adjacency: list[set[int]]

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])


@dataclass
class GroupingStats:
    triangles: int
    quads: int
    paired: int
    degenerate: int

    @property
    def degenerate_percent(self) -> float:
        return 100.0 * self.degenerate / self.quads if self.quads else 0.0


def build_candidate_graph(triangles) -> QuadCandidateGraph:
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    edge_tris: dict[tuple[int, int], list[int]] = defaultdict(list)
    for t, (a, b, c) in enumerate(tris.tolist()):
        if a == b or b == c or a == c:
            continue
        for u, v in ((a, b), (b, c), (c, a)):
            edge_tris[(min(u, v), max(u, v))].append(t)

    pairs: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for edge, ts in edge_tris.items():
        for i in range(len(ts)):
            for j in range(i + 1, len(ts)):
                a, b = min(ts[i], ts[j]), max(ts[i], ts[j])
                if a != b:
                    pairs[(a, b)].append(edge)

    nodes, shared = [], []
    for pair in sorted(pairs):
        # exactly one shared edge; two triangles on the same vertex triple are skipped
        if len(pairs[pair]) == 1:
            nodes.append(pair)
            shared.append(pairs[pair][0])

    by_tri: dict[int, list[int]] = defaultdict(list)
    for n, (a, b) in enumerate(nodes):
        by_tri[a].append(n)
        by_tri[b].append(n)
    adjacency: list[set[int]] = [set() for _ in nodes]
    for members in by_tri.values():
        for i in members:
            adjacency[i].update(m for m in members if m != i)
    return QuadCandidateGraph(nodes, shared, adjacency)


def quad_from_pair(tri_a, tri_b) -> list[int]:
    """Quad whose two triangles reproduce ``tri_a`` exactly (same winding).

    The shared edge becomes the diagonal (v0, v2).
    """
    a = list(tri_a)
    shared = set(a) & set(tri_b)
    # rotate a so its lone vertex sits in slot 1
    k = next(i for i in range(3) if a[i] not in shared)
    s0, x, s1 = a[(k - 1) % 3], a[k], a[(k + 1) % 3]
    y = next(v for v in tri_b if v not in shared)
    return [s0, x, s1, y]


def _min_degree_order(graph: QuadCandidateGraph) -> list[int]:
    """Selected candidates: repeatedly take the candidate of lowest degree in the
    remaining graph (ties by triangle pair), then drop it and its neighbours."""
    alive = [True] * len(graph.nodes)
    deg = [len(a) for a in graph.adjacency]
    heap = [(deg[n], graph.nodes[n], n) for n in range(len(graph.nodes))]
    heapq.heapify(heap)
    selected = []
    while heap:
        d, _, n = heapq.heappop(heap)
        if not alive[n] or d != deg[n]:
            continue  # stale entry
        selected.append(n)
        alive[n] = False
        removed = [m for m in graph.adjacency[n] if alive[m]]
        for m in removed:
            alive[m] = False
        for m in removed:
            for k in graph.adjacency[m]:
                if alive[k]:
                    deg[k] -= 1
                    heapq.heappush(heap, (deg[k], graph.nodes[k], k))
    return selected


def greedy_mis_pairing(graph: QuadCandidateGraph, triangles) -> tuple[np.ndarray, np.ndarray, GroupingStats]:
    """Return ``(quads, source_triangles, stats)``.

    ``source_triangles[i]`` is ``(tri_a, tri_b)`` for a paired quad and
    ``(tri, -1)`` for a degenerate one.  Output order: paired quads in
    selection order, then degenerate quads by triangle index.
    """
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    used = np.zeros(len(tris), dtype=bool)
    quads, sources = [], []
    for n in _min_degree_order(graph):
        a, b = graph.nodes[n]
        used[a] = used[b] = True
        quads.append(quad_from_pair(tris[a], tris[b]))
        sources.append((a, b))
    paired = len(quads)
    for t in np.flatnonzero(~used):
        v0, v1, v2 = tris[t]
        quads.append([v0, v1, v2, v2])
        sources.append((int(t), -1))
    stats = GroupingStats(
        triangles=len(tris), quads=len(quads), paired=paired, degenerate=len(quads) - paired
    )
    return (
        np.array(quads, dtype=np.int64).reshape(-1, 4),
        np.array(sources, dtype=np.int64).reshape(-1, 2),
        stats,
    )


def group_quads(scene):
    """Re-pair a scene made of triangles (degenerate quads) into quads.

    Only triangles with the same material are paired.  Returns the new scene
    and the grouping statistics.
    """
    from .scene import Scene

    q = scene.quads
    is_tri = q[:, 2] == q[:, 3]
    tris = q[is_tri][:, :3]
    tri_mat = scene.quad_material[is_tri]
    new_quads = [q[~is_tri]]
    new_mat = [scene.quad_material[~is_tri]]
    total = GroupingStats(len(tris), int((~is_tri).sum()), int((~is_tri).sum()), 0)
    for m in np.unique(tri_mat):
        sel = tris[tri_mat == m]
        quads, _, stats = greedy_mis_pairing(build_candidate_graph(sel), sel)
        new_quads.append(quads)
        new_mat.append(np.full(len(quads), m, dtype=np.int64))
        total.quads += stats.quads
        total.paired += stats.paired
        total.degenerate += stats.degenerate
    grouped = Scene(
        positions=scene.positions,
        quads=np.concatenate(new_quads) if new_quads else q,
        quad_material=np.concatenate(new_mat),
        materials=scene.materials,
        normals=scene.normals,
        colors=scene.colors,
        uvs=scene.uvs,
        name=scene.name,
    )
    return grouped, total
