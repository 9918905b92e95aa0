"""Per-pixel depth filter and front-to-back blending.

The filter is a fixed-capacity queue of pending ``(key, premultiplied color)``
samples kept sorted by key.  Pushing into a full filter commits its nearest
entry (or the new sample, when that is nearer still).  A committed key that
is smaller than the largest key committed before it marks the pixel invalid:
some sample was blended out of depth order.

A sequence is committed in sorted order iff no sample is preceded by more
than ``capacity`` samples with larger keys.

With the alpha threshold on, a pixel whose accumulated alpha has reached
the cutoff drops every further committed sample.

The njit helpers operate on row ``p`` of caller-owned arrays so a raster
kernel can keep one filter per pixel in flat scratch storage.
"""
from __future__ import annotations

import numpy as np
from numba import njit

ALPHA_CUTOFF = np.float32(1.0 - 1.0 / 128.0)
NO_CUTOFF = np.float32(2.0)


@njit(cache=True, nogil=True, inline="always")
def blend_into(acc, p, r, g, b, a):
    """acc[p] = acc[p] + (1 - acc[p].a) * sample, all premultiplied float32."""
    t = np.float32(1.0) - acc[p, 3]
    acc[p, 0] = acc[p, 0] + t * r
    acc[p, 1] = acc[p, 1] + t * g
    acc[p, 2] = acc[p, 2] + t * b
    acc[p, 3] = acc[p, 3] + t * a


@njit(cache=True, nogil=True, inline="always")
def commit(acc, max_key, invalid, blended, p, cutoff, key, r, g, b, a):
    if acc[p, 3] >= cutoff:
        return  # opaque enough: the sample is dropped
    if key < max_key[p]:
        invalid[p] = True
    else:
        max_key[p] = key
    blend_into(acc, p, r, g, b, a)
    blended[p] += 1


@njit(cache=True, nogil=True, inline="always")
def filter_push(keys, cols, count, p, capacity, key, r, g, b, a):
    """Insert a sample into filter ``p``.

    Returns ``(emitted, key, r, g, b, a)``; on overflow the nearest of the
    pending samples and the new one is pushed out.
    """
    n = count[p]
    emitted = False
    ek = key
    er, eg, eb, ea = r, g, b, a
    if n == capacity:
        emitted = True
        if key < keys[p, 0]:
            return emitted, ek, er, eg, eb, ea
        ek = keys[p, 0]
        er = cols[p, 0, 0]
        eg = cols[p, 0, 1]
        eb = cols[p, 0, 2]
        ea = cols[p, 0, 3]
        for j in range(1, n):
            keys[p, j - 1] = keys[p, j]
            for c in range(4):
                cols[p, j - 1, c] = cols[p, j, c]
        n -= 1
    j = n
    while j > 0 and keys[p, j - 1] > key:
        keys[p, j] = keys[p, j - 1]
        for c in range(4):
            cols[p, j, c] = cols[p, j - 1, c]
        j -= 1
    keys[p, j] = key
    cols[p, j, 0] = r
    cols[p, j, 1] = g
    cols[p, j, 2] = b
    cols[p, j, 3] = a
    count[p] = n + 1
    return emitted, ek, er, eg, eb, ea


@njit(cache=True, nogil=True, inline="always")
def push_and_blend(keys, cols, count, acc, max_key, invalid, blended, p, cutoff, capacity, key, r, g, b, a):
    emitted, ek, er, eg, eb, ea = filter_push(keys, cols, count, p, capacity, key, r, g, b, a)
    if emitted:
        commit(acc, max_key, invalid, blended, p, cutoff, ek, er, eg, eb, ea)


@njit(cache=True, nogil=True, inline="always")
def flush_and_blend(keys, cols, count, acc, max_key, invalid, blended, p, cutoff):
    for j in range(count[p]):
        commit(acc, max_key, invalid, blended, p, cutoff, keys[p, j], cols[p, j, 0], cols[p, j, 1], cols[p, j, 2], cols[p, j, 3])
    count[p] = 0


@njit(cache=True)
def _push_one(keys, cols, count, capacity, key, r, g, b, a):
    return filter_push(keys, cols, count, 0, capacity, key, r, g, b, a)


class DepthFilter:
    """A single pixel's filter, for direct use and testing.

    >>> f = DepthFilter(3)
    >>> [f.push(d) for d in (3.0, 1.0, 2.0)]
    [None, None, None]
    >>> [d for d, _ in f.flush()]
    [1.0, 2.0, 3.0]
    """

    def __init__(self, capacity: int = 3):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._keys = np.zeros((1, capacity), dtype=np.float64)
        self._cols = np.zeros((1, capacity, 4), dtype=np.float32)
        self._count = np.zeros(1, dtype=np.int64)
        self.max_blended_depth = -np.inf
        self.invalid = False

    def __len__(self):
        return int(self._count[0])

    def _emit(self, depth, color):
        if depth < self.max_blended_depth:
            self.invalid = True
        self.max_blended_depth = max(self.max_blended_depth, depth)
        return depth, color

    def push(self, depth: float, color=(0.0, 0.0, 0.0, 0.0)):
        """Insert a sample; return the ``(depth, color)`` pushed out, if any."""
        r, g, b, a = (np.float32(c) for c in color)
        emitted, ek, er, eg, eb, ea = _push_one(self._keys, self._cols, self._count, self.capacity, float(depth), r, g, b, a)
        if emitted:
            return self._emit(ek, (er, eg, eb, ea))
        return None

    def flush(self):
        """Emit all pending samples in ascending depth."""
        out = [
            self._emit(float(self._keys[0, j]), tuple(self._cols[0, j]))
            for j in range(int(self._count[0]))
        ]
        self._count[0] = 0
        return out


def blend_front_to_back(acc, sample):
    """Composite a straight-alpha ``sample`` behind a premultiplied ``acc``."""
    acc = np.asarray(acc, dtype=np.float32).reshape(1, 4).copy()
    r, g, b, a = (np.float32(c) for c in sample)
    blend_into(acc, 0, r * a, g * a, b * a, a)
    return acc[0]
