"""Scanline coverage from homogeneous edge functions.

A pixel ``(x, y)`` is covered by a triangle when, for each edge ``i``,
``v = a_i * (x + 0.5) + (b_i * (y + 0.5) + c_i)`` is positive, or zero on an
inclusive (top-left) edge.  Every routine here, and every brute-force check
in the tests, evaluates exactly that expression, so interval results agree
with per-pixel tests bit for bit: the evaluation is monotone in ``x`` and
``y``, which makes a rounded analytic estimate plus a local fix-up exact.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

BIN_SIZE = 32


@njit(cache=True, nogil=True)
def edge_value(edges, i, x, y):
    return edges[i, 0] * (x + 0.5) + (edges[i, 1] * (y + 0.5) + edges[i, 2])


@njit(cache=True, nogil=True)
def _passes(a, r, incl, x):
    v = a * (x + 0.5) + r
    return v > 0.0 or (v == 0.0 and incl != 0)


@njit(cache=True, nogil=True)
def pixel_covered(edges, inclusive, x, y):
    for i in range(3):
        v = edge_value(edges, i, x, y)
        if not (v > 0.0 or (v == 0.0 and inclusive[i] != 0)):
            return False
    return True


@njit(cache=True, nogil=True)
def row_interval(edges, inclusive, y, xa, xb):
    """Inclusive interval of covered pixels of row ``y`` within ``[xa, xb]``.

    Returns ``(lo, hi)``; ``lo > hi`` means empty.  Runs in constant time
    apart from a fix-up step that moves each bound by at most a pixel or two.
    """
    lo = xa
    hi = xb
    py = y + 0.5
    for i in range(3):
        a = edges[i, 0]
        r = edges[i, 1] * py + edges[i, 2]
        inc = inclusive[i]
        if a == 0.0:
            if not (r > 0.0 or (r == 0.0 and inc != 0)):
                return xb + 1, xb
            continue
        t = -r / a - 0.5
        if a > 0.0:
            # smallest x satisfying the edge
            if t != t or t < xa:
                est = xa
            elif t > xb + 1:
                est = xb + 1
            else:
                est = int(math.ceil(t))
            while est > xa and _passes(a, r, inc, est - 1):
                est -= 1
            while est <= xb and not _passes(a, r, inc, est):
                est += 1
            if est > lo:
                lo = est
        else:
            # largest x satisfying the edge
            if t != t or t > xb:
                est = xb
            elif t < xa - 1:
                est = xa - 1
            else:
                est = int(math.floor(t))
            while est < xb and _passes(a, r, inc, est + 1):
                est += 1
            while est >= xa and not _passes(a, r, inc, est):
                est -= 1
            if est < hi:
                hi = est
        if lo > hi:
            return xb + 1, xb
    return lo, hi


@njit(cache=True, nogil=True)
def _rect_rejected(edges, inclusive, x0, y0, x1, y1):
    """Trivial reject: some edge fails at all four corner pixel centers.

    Exact because the edge evaluation is monotone in each axis, so its
    maximum over the rectangle's pixel centers sits at a corner.
    """
    for i in range(3):
        m = edge_value(edges, i, x0, y0)
        m = max(m, edge_value(edges, i, x1, y0))
        m = max(m, edge_value(edges, i, x0, y1))
        m = max(m, edge_value(edges, i, x1, y1))
        if m < 0.0 or (m == 0.0 and inclusive[i] == 0):
            return True
    return False


@njit(cache=True, nogil=True)
def triangle_bins(edges, inclusive, bounds, width, height, out):
    """Write ids (``by * bins_x + bx``) of bins holding >= 1 covered pixel into ``out``.

    Returns the number of bins written, in ascending id order.
    """
    bins_x = (width + BIN_SIZE - 1) // BIN_SIZE
    x0, y0, x1, y1 = bounds[0], bounds[1], bounds[2], bounds[3]
    n = 0
    for by in range(y0 // BIN_SIZE, y1 // BIN_SIZE + 1):
        ry0 = max(y0, by * BIN_SIZE)
        ry1 = min(y1, by * BIN_SIZE + BIN_SIZE - 1)
        for bx in range(x0 // BIN_SIZE, x1 // BIN_SIZE + 1):
            rx0 = max(x0, bx * BIN_SIZE)
            rx1 = min(x1, bx * BIN_SIZE + BIN_SIZE - 1)
            if _rect_rejected(edges, inclusive, rx0, ry0, rx1, ry1):
                continue
            for y in range(ry0, ry1 + 1):
                lo, hi = row_interval(edges, inclusive, y, rx0, rx1)
                if lo <= hi:
                    out[n] = by * bins_x + bx
                    n += 1
                    break
    return n


@njit(cache=True, nogil=True)
def brute_force_coverage(edges, inclusive, bounds, width, height):
    """Per-pixel coverage mask over the viewport (reference for tests and the oracle)."""
    mask = np.zeros((height, width), dtype=np.bool_)
    for y in range(max(bounds[1], 0), min(bounds[3], height - 1) + 1):
        for x in range(max(bounds[0], 0), min(bounds[2], width - 1) + 1):
            mask[y, x] = pixel_covered(edges, inclusive, x, y)
    return mask
