"""Prediction-based error-bounded codec honoring per-point bounds."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from ..qoi import DTYPES, dtype_tag
from . import huffman
from .archive import (
    Archive, ArchiveError, ChecksumError, VersionError, pack_corrections, unpack_corrections,
)
from .lorenzo import LOSSLESS_LEVEL, MAX_LEVEL, decode_scan, encode_scan, level_table, stencil

__all__ = [
    "Archive", "ArchiveError", "ChecksumError", "VersionError", "CodecConfig",
    "compress", "decompress", "encode_eb_levels", "effective_bounds", "estimate_cr",
    "attach_corrections", "sample_slices",
]


@dataclass(frozen=True)
class CodecConfig:
    zlib_level: int = 6
    sample_edge: int = 64

    def to_header(self) -> dict:
        return {
            "predictor": "lorenzo-1",
            "quantizer": "linear-radius-32768",
            "entropy": "canonical-prefix",
            "lossless": f"zlib-{self.zlib_level}",
        }


def encode_eb_levels(eps, eps_g: float) -> np.ndarray:
    """Level k per point so that eps_g * 2**-k <= eps_i; LOSSLESS_LEVEL past the cap."""
    eps = np.asarray(eps, dtype=np.float64)
    levels = np.full(eps.shape, LOSSLESS_LEVEL, dtype=np.int64)
    pos = eps > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        k = np.ceil(np.log2(eps_g / np.where(pos, eps, 1.0)))
    k = np.where(eps >= eps_g, 0, k)
    k = np.where(np.isfinite(k), k, LOSSLESS_LEVEL + 1).astype(np.int64)
    # guard against log2 rounding: bump until the effective bound is conservative
    k = np.maximum(k, 0)
    for _ in range(2):
        over = pos & (k <= MAX_LEVEL) & (np.ldexp(eps_g, -np.minimum(k, MAX_LEVEL)) > eps)
        k = np.where(over, k + 1, k)
    levels = np.where(pos & (k <= MAX_LEVEL), k, LOSSLESS_LEVEL)
    return levels.astype(np.uint8)


def effective_bounds(levels: np.ndarray, eps_g: float) -> np.ndarray:
    return level_table(eps_g)[np.asarray(levels, dtype=np.int64)]


def _deflate(b: bytes, cfg: CodecConfig) -> bytes:
    return zlib.compress(b, cfg.zlib_level)


def _inflate(b: bytes, what: str) -> bytes:
    try:
        return zlib.decompress(b)
    except zlib.error as exc:
        raise ArchiveError(f"{what} stream: {exc}") from None


def _encode_streams(values: np.ndarray, levels: np.ndarray, eps_g: float, cfg: CodecConfig):
    shape = np.asarray(values.shape, dtype=np.int64)
    pstrides, offsets, signs = stencil(values.shape)
    f32 = values.dtype == np.float32
    syms, recon, outliers = encode_scan(
        values.astype(np.float64).ravel(), shape, levels.ravel(), level_table(eps_g),
        pstrides, offsets, signs, f32,
    )
    streams = {
        "quant": _deflate(huffman.encode(syms), cfg),
        "levels": _deflate(huffman.encode(levels.ravel().astype(np.uint16)), cfg),
        "outliers": _deflate(outliers.astype(values.dtype.newbyteorder("<")).tobytes(), cfg),
    }
    return streams, recon.astype(values.dtype).reshape(values.shape), int(outliers.size)


def compress(values, eps, eps_g: float, header: dict | None = None, cfg: CodecConfig = CodecConfig()):
    """Compress one field with per-point bounds ``eps`` (0 marks lossless points).

    Returns ``(archive, reconstruction)``; the reconstruction is what
    :func:`decompress` yields before corrections are attached.
    """
    values = np.asarray(values)
    tag = dtype_tag(values.dtype)
    if not eps_g > 0:
        raise ValueError("global error bound must be positive")
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), values.shape)
    levels = encode_eb_levels(eps, eps_g)
    streams, recon, n_out = _encode_streams(values, levels, eps_g, cfg)
    streams["corrections"] = pack_corrections(np.zeros(0, np.int64), np.zeros(0), values.dtype, cfg.zlib_level)
    h = dict(header or {})
    h.update({
        "shape": list(values.shape),
        "dtype": tag,
        "row_major": True,
        "eb_global": float(eps_g),
        "codec": cfg.to_header(),
        "n_outliers": n_out,
    })
    return Archive(h, streams), recon


def attach_corrections(archive: Archive, indices, values, cfg: CodecConfig = CodecConfig()) -> Archive:
    dt = DTYPES[archive.header["dtype"]]
    indices = np.asarray(indices, dtype=np.int64)
    order = np.argsort(indices, kind="stable")
    blob = pack_corrections(indices[order], np.asarray(values)[order], dt, cfg.zlib_level)
    header = dict(archive.header, n_corrections=int(indices.size))
    return Archive(header, dict(archive.streams, corrections=blob))


def decompress(archive: Archive | bytes) -> np.ndarray:
    if isinstance(archive, (bytes, bytearray)):
        archive = Archive.from_bytes(bytes(archive))
    h = archive.header
    dt = DTYPES[h["dtype"]]
    shape = tuple(int(s) for s in h["shape"])
    n = int(np.prod(shape))
    eps_g = float(h["eb_global"])
    syms = huffman.decode(_inflate(archive.streams["quant"], "quant"))
    levels = huffman.decode(_inflate(archive.streams["levels"], "levels")).astype(np.uint8)
    if syms.size != n or levels.size != n:
        raise ArchiveError(f"stream holds {syms.size}/{levels.size} symbols for {n} points")
    raw = _inflate(archive.streams["outliers"], "outliers")
    outliers = np.frombuffer(raw, dtype=dt).astype(np.float64)
    if outliers.size != int(np.count_nonzero(syms == 0)):
        raise ArchiveError("outlier count does not match escape symbols")
    if np.any(levels > LOSSLESS_LEVEL):
        raise ArchiveError("error-bound level out of range")
    pstrides, offsets, signs = stencil(shape)
    recon = decode_scan(
        syms, np.asarray(shape, dtype=np.int64), levels, level_table(eps_g), outliers,
        pstrides, offsets, signs, dt == np.float32,
    )
    out = recon.astype(dt).reshape(shape)
    try:
        idx, vals = unpack_corrections(archive.streams["corrections"], dt)
    except zlib.error as exc:
        raise ArchiveError(f"corrections stream: {exc}") from None
    if idx.size:
        if idx.max() >= n:
            raise ArchiveError("correction index out of range")
        out.ravel()[idx] = vals
    return out


def sample_slices(shape, edge: int = 64) -> tuple[slice, ...]:
    """Centered sub-block of at most ``edge`` points per axis."""
    out = []
    for n in shape:
        m = min(n, edge)
        start = (n - m) // 2
        out.append(slice(start, start + m))
    return tuple(out)


def estimate_cr(values, eps: float, sample_edge: int = 64, pointwise=None, cfg: CodecConfig = CodecConfig()) -> float:
    """Sample-bytes-in / sample-bytes-out for the centered sub-block.

    ``pointwise`` (same shape as ``values``) optionally replaces the uniform
    bound with ``min(pointwise, eps)`` so the bound side-stream is priced in.
    """
    values = np.asarray(values)
    if not (eps > 0 and math.isfinite(eps)):
        raise ValueError("sample error bound must be positive and finite")
    sl = sample_slices(values.shape, sample_edge)
    sample = np.ascontiguousarray(values[sl])
    if sample.size < 2:
        raise ValueError("sample needs at least 2 points")
    if pointwise is None:
        levels = np.zeros(sample.shape, dtype=np.uint8)
    else:
        levels = encode_eb_levels(np.minimum(np.asarray(pointwise)[sl], eps), eps)
    streams, _, _ = _encode_streams(sample, levels, eps, cfg)
    return sample.nbytes / sum(len(b) for b in streams.values())
