"""Bit-packed record formats shared by the setup and raster stages.

Scalar helpers are numba-compiled so the raster kernels can call them
directly; they are also plain callables from Python.  The ``*_array``
variants are vectorized numpy versions used by the setup stage.

Record layouts (bit 0 = least significant):

* normal ``X10Y10Z10``: x in bits 0-9, y in 10-19, z in 20-29, each a
  signed 10-bit two's complement value ``round(c * 511)``.
* color ``R8G8B8A8``: r in bits 0-7, g 8-15, b 16-23, a 24-31.
* bin AABB: x0 bits 0-6, y0 7-13, x1 14-20, y1 21-27, cull flags 28-29.
* tri-block-row (128 bits, two 64-bit words):
  low word holds rows 0-5 as ``begin | last << 5`` at ``10 * row`` and the
  4-bit column mask at bit 60; high word holds rows 6-7 at ``10 * (row - 6)``
  and the 24-bit triangle index at bit 20.
* tri-half-block (64 bits): rows 0-3 as ``begin | last << 3`` at
  ``6 * row``, triangle index at bit 24, fragment prefix sum (low 12 bits)
  at bit 48.
* sort key (32 bits): quantized depth in the high 22 bits, tri-block index
  in the low 10 bits.
"""
from __future__ import annotations

import numpy as np
from numba import njit

NORMAL_SCALE = 511
DEPTH_BITS = 22
DEPTH_MAX = (1 << DEPTH_BITS) - 1
SORT_INDEX_BITS = 10
TRI_INDEX_BITS = 24
TRI_INDEX_MAX = (1 << TRI_INDEX_BITS) - 1
PREFIX_BITS = 12
PREFIX_MASK = (1 << PREFIX_BITS) - 1
AABB_COORD_LIMIT = 128

EMPTY_ROW32 = (31, 0)
EMPTY_ROW8 = (7, 0)


class PackingError(ValueError):
    """A value does not fit in its packed field."""


# -- normals -----------------------------------------------------------------

@njit(cache=True)
def _to_s10(c):
    v = int(np.floor(c * NORMAL_SCALE + 0.5))
    if v > NORMAL_SCALE:
        v = NORMAL_SCALE
    elif v < -NORMAL_SCALE:
        v = -NORMAL_SCALE
    return v & 0x3FF


@njit(cache=True)
def _from_s10(bits):
    bits = bits & 0x3FF
    if bits >= 512:
        bits -= 1024
    return bits


@njit(cache=True)
def encode_normal(x, y, z):
    return _to_s10(x) | (_to_s10(y) << 10) | (_to_s10(z) << 20)


@njit(cache=True)
def decode_normal(word):
    word = int(word)
    x = _from_s10(word) / NORMAL_SCALE
    y = _from_s10(word >> 10) / NORMAL_SCALE
    z = _from_s10(word >> 20) / NORMAL_SCALE
    return x, y, z


def encode_normal_array(normals: np.ndarray) -> np.ndarray:
    n = np.asarray(normals, dtype=np.float64)
    q = np.clip(np.floor(n * NORMAL_SCALE + 0.5), -NORMAL_SCALE, NORMAL_SCALE).astype(np.int64)
    q &= 0x3FF
    return (q[..., 0] | (q[..., 1] << 10) | (q[..., 2] << 20)).astype(np.uint32)


def decode_normal_array(words: np.ndarray) -> np.ndarray:
    w = np.asarray(words, dtype=np.int64)
    out = np.empty(w.shape + (3,), dtype=np.float64)
    for i in range(3):
        f = (w >> (10 * i)) & 0x3FF
        f = np.where(f >= 512, f - 1024, f)
        out[..., i] = f / NORMAL_SCALE
    return out


# -- colors ------------------------------------------------------------------

@njit(cache=True)
def _to_u8(c):
    v = int(np.floor(c * 255.0 + 0.5))
    return min(max(v, 0), 255)


@njit(cache=True)
def pack_color(r, g, b, a):
    return _to_u8(r) | (_to_u8(g) << 8) | (_to_u8(b) << 16) | (_to_u8(a) << 24)


@njit(cache=True)
def unpack_color(word):
    word = int(word)
    return (
        (word & 0xFF) / 255.0,
        ((word >> 8) & 0xFF) / 255.0,
        ((word >> 16) & 0xFF) / 255.0,
        ((word >> 24) & 0xFF) / 255.0,
    )


def pack_color_array(colors: np.ndarray) -> np.ndarray:
    c = np.asarray(colors, dtype=np.float64)
    q = np.clip(np.floor(c * 255.0 + 0.5), 0, 255).astype(np.uint32)
    return q[..., 0] | (q[..., 1] << 8) | (q[..., 2] << 16) | (q[..., 3] << 24)


def unpack_color_array(words: np.ndarray) -> np.ndarray:
    w = np.asarray(words, dtype=np.uint32)
    return np.stack([((w >> (8 * i)) & 0xFF) / 255.0 for i in range(4)], axis=-1)


# -- bin AABB ----------------------------------------------------------------

def pack_bin_aabb(x0: int, y0: int, x1: int, y1: int, cull_flags: int = 0) -> int:
    for v in (x0, y0, x1, y1):
        if not 0 <= v < AABB_COORD_LIMIT:
            raise PackingError(f"bin coordinate {v} does not fit in 7 bits")
    if not 0 <= cull_flags < 4:
        raise PackingError(f"cull flags {cull_flags} do not fit in 2 bits")
    return x0 | (y0 << 7) | (x1 << 14) | (y1 << 21) | (cull_flags << 28)


def unpack_bin_aabb(word: int) -> tuple[int, int, int, int, int]:
    word = int(word)
    return (
        word & 0x7F,
        (word >> 7) & 0x7F,
        (word >> 14) & 0x7F,
        (word >> 21) & 0x7F,
        (word >> 28) & 0x3,
    )


def pack_bin_aabb_array(aabbs: np.ndarray, flags: np.ndarray) -> np.ndarray:
    a = np.asarray(aabbs, dtype=np.int64)
    if a.size and (a.min() < 0 or a.max() >= AABB_COORD_LIMIT):
        raise PackingError("bin coordinate does not fit in 7 bits (resolution above limit)")
    f = np.asarray(flags, dtype=np.int64)
    return (a[:, 0] | (a[:, 1] << 7) | (a[:, 2] << 14) | (a[:, 3] << 21) | (f << 28)).astype(np.uint32)


def unpack_bin_aabb_array(words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(words, dtype=np.int64)
    aabbs = np.stack([(w >> s) & 0x7F for s in (0, 7, 14, 21)], axis=-1)
    return aabbs, (w >> 28) & 0x3


# -- tri-block-rows ----------------------------------------------------------

@njit(cache=True)
def tbr_pack(begins, lasts, col_mask, tri_index):
    """Pack 8 row intervals, a column mask and a triangle index into two words."""
    lo = np.int64(0)
    hi = np.int64(0)
    for r in range(6):
        lo |= np.int64(begins[r] | (lasts[r] << 5)) << np.int64(10 * r)
    lo |= np.int64(col_mask & 0xF) << np.int64(60)
    for r in range(6, 8):
        hi |= np.int64(begins[r] | (lasts[r] << 5)) << np.int64(10 * (r - 6))
    hi |= np.int64(tri_index & TRI_INDEX_MAX) << np.int64(20)
    return lo, hi


@njit(cache=True)
def tbr_row(lo, hi, r):
    if r < 6:
        bits = (lo >> np.int64(10 * r)) & 0x3FF
    else:
        bits = (hi >> np.int64(10 * (r - 6))) & 0x3FF
    return bits & 0x1F, (bits >> 5) & 0x1F


@njit(cache=True)
def tbr_col_mask(lo):
    return (lo >> np.int64(60)) & 0xF


@njit(cache=True)
def tbr_tri_index(hi):
    return (hi >> np.int64(20)) & TRI_INDEX_MAX


def pack_tri_block_row(intervals, col_mask: int, tri_index: int) -> int:
    """Pack into a single 128-bit integer (low word | high word << 64)."""
    if len(intervals) != 8:
        raise PackingError("tri-block-row needs 8 row intervals")
    for b, e in intervals:
        if not (0 <= b < 32 and 0 <= e < 32):
            raise PackingError(f"interval ({b}, {e}) does not fit in 5 bits")
    if not 0 <= col_mask < 16:
        raise PackingError("column mask does not fit in 4 bits")
    if not 0 <= tri_index <= TRI_INDEX_MAX:
        raise PackingError(f"triangle index {tri_index} does not fit in 24 bits")
    begins = np.array([b for b, _ in intervals], dtype=np.int64)
    lasts = np.array([e for _, e in intervals], dtype=np.int64)
    lo, hi = tbr_pack(begins, lasts, col_mask, tri_index)
    return (int(lo) & 0xFFFFFFFFFFFFFFFF) | (int(hi) << 64)


def unpack_tri_block_row(value: int) -> tuple[list[tuple[int, int]], int, int]:
    lo = np.int64(_as_i64(value))
    hi = np.int64(value >> 64)
    rows = [tuple(int(v) for v in tbr_row(lo, hi, r)) for r in range(8)]
    return rows, int(tbr_col_mask(lo)), int(tbr_tri_index(hi))


def _as_i64(value: int) -> int:
    v = value & 0xFFFFFFFFFFFFFFFF
    return v - (1 << 64) if v >= 1 << 63 else v


def column_mask(begins, lasts) -> int:
    """Bit b set iff some non-empty row interval touches columns [8b, 8b+7]."""
    mask = 0
    for b, e in zip(begins, lasts):
        if b <= e:
            for c in range(b >> 3, (e >> 3) + 1):
                mask |= 1 << c
    return mask


# -- tri-half-blocks ---------------------------------------------------------

@njit(cache=True)
def thb_pack(begins, lasts, tri_index, prefix):
    v = np.int64(0)
    for r in range(4):
        v |= np.int64(begins[r] | (lasts[r] << 3)) << np.int64(6 * r)
    v |= np.int64(tri_index & TRI_INDEX_MAX) << np.int64(24)
    v |= np.int64(prefix & PREFIX_MASK) << np.int64(48)
    return v


@njit(cache=True)
def thb_row(v, r):
    bits = (v >> np.int64(6 * r)) & 0x3F
    return bits & 0x7, (bits >> 3) & 0x7


@njit(cache=True)
def thb_tri_index(v):
    return (v >> np.int64(24)) & TRI_INDEX_MAX


@njit(cache=True)
def thb_prefix(v):
    return (v >> np.int64(48)) & PREFIX_MASK


def pack_tri_half_block(intervals, tri_index: int, prefix: int) -> int:
    """``prefix`` is the full running fragment count; only its low 12 bits are kept."""
    if len(intervals) != 4:
        raise PackingError("tri-half-block needs 4 row intervals")
    for b, e in intervals:
        if not (0 <= b < 8 and 0 <= e < 8):
            raise PackingError(f"interval ({b}, {e}) does not fit in 3 bits")
    if not 0 <= tri_index <= TRI_INDEX_MAX:
        raise PackingError(f"triangle index {tri_index} does not fit in 24 bits")
    if prefix < 0:
        raise PackingError("negative prefix sum")
    begins = np.array([b for b, _ in intervals], dtype=np.int64)
    lasts = np.array([e for _, e in intervals], dtype=np.int64)
    return int(thb_pack(begins, lasts, tri_index, prefix))


def unpack_tri_half_block(value: int) -> tuple[list[tuple[int, int]], int, int]:
    v = np.int64(value)
    rows = [tuple(int(x) for x in thb_row(v, r)) for r in range(4)]
    return rows, int(thb_tri_index(v)), int(thb_prefix(v))


@njit(cache=True)
def unwrap_prefix(stored, previous_full):
    """Recover a full prefix sum from its low 12 bits.

    Valid because consecutive prefix sums differ by 1..32 fragments.
    """
    full = (previous_full & ~np.int64(PREFIX_MASK)) | stored
    if full <= previous_full:
        full += PREFIX_MASK + 1
    return full


# -- sort keys ---------------------------------------------------------------

def pack_sort_key(depth_q: int, index: int) -> int:
    if not 0 <= depth_q <= DEPTH_MAX:
        raise PackingError(f"quantized depth {depth_q} does not fit in 22 bits")
    if not 0 <= index < (1 << SORT_INDEX_BITS):
        raise PackingError(f"tri-block index {index} does not fit in 10 bits")
    return (depth_q << SORT_INDEX_BITS) | index


def unpack_sort_key(key: int) -> tuple[int, int]:
    return key >> SORT_INDEX_BITS, key & ((1 << SORT_INDEX_BITS) - 1)


@njit(cache=True)
def quantize_depth(depth):
    """Map depth in [0, 1] monotonically onto [0, 2**22 - 1], clamping outside."""
    if not depth > 0.0:
        return 0
    if depth >= 1.0:
        return DEPTH_MAX
    return int(np.floor(depth * DEPTH_MAX + 0.5))
