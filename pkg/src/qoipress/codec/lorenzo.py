"""First-order Lorenzo prediction with per-point linear quantization.

Both directions run the same scan over a zero-padded copy of the
reconstruction, so the decoder replays the encoder's arithmetic exactly.
"""

from __future__ import annotations

import itertools

import numba as nb
import numpy as np

RADIUS = 32768          # symbol = q + RADIUS; 0 is the escape symbol
ESCAPE = 0
MAX_LEVEL = 40
LOSSLESS_LEVEL = MAX_LEVEL + 1


def stencil(shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Padded strides plus (offset, sign) pairs of the Lorenzo stencil for ``shape``."""
    padded = np.asarray(shape, dtype=np.int64) + 1
    pstrides = np.ones(len(shape), dtype=np.int64)
    for d in range(len(shape) - 2, -1, -1):
        pstrides[d] = pstrides[d + 1] * padded[d + 1]
    offsets, signs = [], []
    for r in range(1, len(shape) + 1):
        for dims in itertools.combinations(range(len(shape)), r):
            offsets.append(-int(sum(pstrides[d] for d in dims)))
            signs.append(1.0 if r % 2 == 1 else -1.0)
    return pstrides, np.asarray(offsets, dtype=np.int64), np.asarray(signs, dtype=np.float64)


def level_table(eps_g: float) -> np.ndarray:
    """Effective bound per level: eps_g * 2**-k, k = 0..MAX_LEVEL (lossless slot is 0)."""
    t = np.array([np.ldexp(eps_g, -k) for k in range(MAX_LEVEL + 1)] + [0.0])
    return t


@nb.njit(cache=True)
def _padded_index(idx, shape, pstrides):
    p = 0
    for d in range(shape.size):
        p += (idx[d] + 1) * pstrides[d]
    return p


@nb.njit(cache=True)
def _advance(idx, shape):
    d = shape.size - 1
    while d >= 0:
        idx[d] += 1
        if idx[d] < shape[d]:
            return
        idx[d] = 0
        d -= 1


@nb.njit(cache=True)
def encode_scan(data, shape, levels, table, pstrides, offsets, signs, f32):
    n = data.size
    total = 1
    for d in range(shape.size):
        total *= shape[d] + 1
    buf = np.zeros(total, dtype=np.float64)
    symbols = np.empty(n, dtype=np.uint16)
    recon = np.empty(n, dtype=np.float64)
    outliers = np.empty(n, dtype=np.float64)
    n_out = 0
    idx = np.zeros(shape.size, dtype=np.int64)
    for i in range(n):
        p = _padded_index(idx, shape, pstrides)
        pred = 0.0
        for j in range(offsets.size):
            pred += signs[j] * buf[p + offsets[j]]
        x = data[i]
        lv = levels[i]
        ok = False
        r = x
        if lv <= MAX_LEVEL and np.isfinite(x) and np.isfinite(pred):
            e = table[lv]
            step = 2.0 * e
            qf = np.floor((x - pred) / step + 0.5)
            if np.isfinite(qf) and abs(qf) < RADIUS:
                r = pred + qf * step
                if f32:
                    r = np.float64(np.float32(r))
                if np.isfinite(r) and abs(r - x) <= e:
                    ok = True
                    symbols[i] = np.uint16(np.int64(qf) + RADIUS)
        if not ok:
            symbols[i] = ESCAPE
            r = x
            outliers[n_out] = x
            n_out += 1
        recon[i] = r
        buf[p] = r if np.isfinite(r) else 0.0
        _advance(idx, shape)
    return symbols, recon, outliers[:n_out]


@nb.njit(cache=True)
def decode_scan(symbols, shape, levels, table, outliers, pstrides, offsets, signs, f32):
    n = symbols.size
    total = 1
    for d in range(shape.size):
        total *= shape[d] + 1
    buf = np.zeros(total, dtype=np.float64)
    recon = np.empty(n, dtype=np.float64)
    k = 0
    idx = np.zeros(shape.size, dtype=np.int64)
    for i in range(n):
        p = _padded_index(idx, shape, pstrides)
        pred = 0.0
        for j in range(offsets.size):
            pred += signs[j] * buf[p + offsets[j]]
        s = symbols[i]
        if s == ESCAPE:
            r = outliers[k]
            k += 1
        else:
            step = 2.0 * table[levels[i]]
            qf = np.float64(np.int64(s) - RADIUS)
            r = pred + qf * step
            if f32:
                r = np.float64(np.float32(r))
        recon[i] = r
        buf[p] = r if np.isfinite(r) else 0.0
        _advance(idx, shape)
    return recon
