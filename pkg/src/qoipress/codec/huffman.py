"""Canonical prefix code over 16-bit symbols.

Blob layout (little-endian)::

    u64 count | u32 used | u16[used] symbols | u8[used] lengths | payload

Symbols are listed in canonical order (length, then value); the payload is
MSB-first and zero-padded to a byte boundary.
"""

from __future__ import annotations

import heapq
import struct

import numba as nb
import numpy as np

MAX_LEN = 24
_HEAD = struct.Struct("<QI")


def code_lengths(freq: np.ndarray, max_len: int = MAX_LEN) -> np.ndarray:
    """Huffman code lengths for the nonzero entries of ``freq``; ties break on symbol."""
    freq = np.asarray(freq, dtype=np.int64).copy()
    lengths = np.zeros(freq.size, dtype=np.int64)
    while True:
        used = np.flatnonzero(freq)
        if used.size == 0:
            return lengths
        if used.size == 1:
            lengths[used[0]] = 1
            return lengths
        heap = [(int(freq[s]), int(s), (int(s),)) for s in used]
        heapq.heapify(heap)
        depth = dict.fromkeys(used.tolist(), 0)
        while len(heap) > 1:
            fa, ta, sa = heapq.heappop(heap)
            fb, tb, sb = heapq.heappop(heap)
            for s in sa + sb:
                depth[s] += 1
            heapq.heappush(heap, (fa + fb, min(ta, tb), sa + sb))
        if max(depth.values()) <= max_len:
            for s, d in depth.items():
                lengths[s] = d
            return lengths
        # flatten the distribution and retry
        freq[used] = np.maximum(freq[used] >> 1, 1)


def canonical_codes(symbols: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Codes for ``symbols`` already sorted by (length, symbol)."""
    codes = np.zeros(symbols.size, dtype=np.uint64)
    code = 0
    prev = int(lengths[0]) if lengths.size else 0
    for i in range(symbols.size):
        ln = int(lengths[i])
        code <<= ln - prev
        codes[i] = code
        code += 1
        prev = ln
    return codes


@nb.njit(cache=True)
def _pack(data, code_of, len_of):
    nbits = 0
    for i in range(data.size):
        nbits += len_of[data[i]]
    out = np.zeros((nbits + 7) // 8, dtype=np.uint8)
    acc = np.uint64(0)
    nacc = 0
    pos = 0
    for i in range(data.size):
        s = data[i]
        ln = len_of[s]
        acc = (acc << np.uint64(ln)) | code_of[s]
        nacc += ln
        while nacc >= 8:
            nacc -= 8
            out[pos] = np.uint8((acc >> np.uint64(nacc)) & np.uint64(0xFF))
            pos += 1
        acc &= (np.uint64(1) << np.uint64(nacc)) - np.uint64(1)
    if nacc > 0:
        out[pos] = np.uint8((acc << np.uint64(8 - nacc)) & np.uint64(0xFF))
    return out


@nb.njit(cache=True)
def _unpack(payload, count, first, cnt, offset, syms, max_len):
    out = np.empty(count, dtype=np.uint16)
    bit = 0
    total = payload.size * 8
    for i in range(count):
        code = 0
        ln = 0
        while True:
            if bit >= total or ln >= max_len:
                return out, False
            b = (payload[bit >> 3] >> (7 - (bit & 7))) & 1
            bit += 1
            code = (code << 1) | b
            ln += 1
            rel = code - first[ln]
            if cnt[ln] > 0 and rel >= 0 and rel < cnt[ln]:
                out[i] = syms[offset[ln] + rel]
                break
    return out, True


def encode(data: np.ndarray) -> bytes:
    data = np.ascontiguousarray(data, dtype=np.uint16).ravel()
    freq = np.bincount(data, minlength=1 << 16) if data.size else np.zeros(1 << 16, np.int64)
    lengths = code_lengths(freq)
    used = np.flatnonzero(lengths)
    order = np.lexsort((used, lengths[used]))
    syms = used[order].astype(np.uint16)
    lens = lengths[used][order].astype(np.uint8)
    codes = canonical_codes(syms, lens)
    code_of = np.zeros(1 << 16, dtype=np.uint64)
    len_of = np.zeros(1 << 16, dtype=np.int64)
    code_of[syms] = codes
    len_of[syms] = lens
    payload = _pack(data, code_of, len_of) if data.size else np.zeros(0, np.uint8)
    return b"".join([
        _HEAD.pack(data.size, syms.size),
        syms.astype("<u2").tobytes(),
        lens.tobytes(),
        payload.tobytes(),
    ])


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < _HEAD.size:
        raise ValueError("truncated prefix-code stream")
    count, used = _HEAD.unpack_from(blob, 0)
    pos = _HEAD.size
    end_table = pos + 3 * used
    if len(blob) < end_table:
        raise ValueError("truncated prefix-code table")
    syms = np.frombuffer(blob, dtype="<u2", count=used, offset=pos).astype(np.uint16)
    lens = np.frombuffer(blob, dtype=np.uint8, count=used, offset=pos + 2 * used).astype(np.int64)
    payload = np.frombuffer(blob, dtype=np.uint8, offset=end_table)
    if count == 0:
        return np.zeros(0, dtype=np.uint16)
    if used == 0 or lens.max() > MAX_LEN or np.any(lens == 0):
        raise ValueError("corrupt prefix-code table")
    codes = canonical_codes(syms, lens)
    first = np.zeros(MAX_LEN + 2, dtype=np.int64)
    cnt = np.zeros(MAX_LEN + 2, dtype=np.int64)
    offset = np.zeros(MAX_LEN + 2, dtype=np.int64)
    for ln in range(1, MAX_LEN + 1):
        sel = np.flatnonzero(lens == ln)
        cnt[ln] = sel.size
        if sel.size:
            first[ln] = int(codes[sel[0]])
            offset[ln] = sel[0]
    out, ok = _unpack(payload, count, first, cnt, offset, syms, MAX_LEN)
    if not ok:
        raise ValueError("prefix-code payload ended early or holds an invalid code")
    return out
