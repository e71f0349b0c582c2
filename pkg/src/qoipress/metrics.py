"""Compression-quality metrics and the run report."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np


def compression_ratio(input_bytes: int, archive_bytes: int) -> float:
    if input_bytes <= 0 or archive_bytes <= 0:
        raise ValueError("sizes must be positive")
    return input_bytes / archive_bytes


def bit_rate(input_bytes: int, archive_bytes: int, element_width: int) -> float:
    """Bits of archive per input value: |C| * 8 * sizeof(x) / |X|."""
    if input_bytes <= 0 or archive_bytes <= 0:
        raise ValueError("sizes must be positive")
    return archive_bytes * 8 * element_width / input_bytes


def psnr_qoi(q_orig, q_recon) -> float:
    q_orig = np.asarray(q_orig, dtype=np.float64).ravel()
    q_recon = np.asarray(q_recon, dtype=np.float64).ravel()
    if q_orig.shape != q_recon.shape:
        raise ValueError("QoI arrays differ in length")
    vrange = float(q_orig.max() - q_orig.min())
    if not vrange > 0:
        raise ValueError("degenerate QoI value range")
    mse = float(np.mean((q_orig - q_recon) ** 2))
    if mse == 0:
        return math.inf
    return 20.0 * math.log10(vrange) - 10.0 * math.log10(mse)


def max_abs_error(orig, recon) -> float:
    d = np.abs(np.asarray(orig, dtype=np.float64) - np.asarray(recon, dtype=np.float64))
    return float(d.max()) if d.size else 0.0


def max_rel_error(orig, recon) -> float | None:
    orig = np.asarray(orig, dtype=np.float64)
    span = float(orig.max() - orig.min())
    if not span > 0:
        return None
    return max_abs_error(orig, recon) / span


@dataclass
class QualityReport:
    cr: float
    br: float
    max_data_err: float
    max_data_err_rel: float | None
    max_qoi_err: float
    max_qoi_err_rel: float | None
    psnr_q: float | None
    n_points: int
    n_corrections: int = 0
    compress_s: float | None = None
    decompress_s: float | None = None
    input_bytes: int = 0
    archive_bytes: int = 0
    passed: bool | None = None
    config: dict = field(default_factory=dict)

    _TIMING = ("compress_s", "decompress_s")

    def row(self, timing: bool = True) -> dict:
        d = asdict(self)
        cfg = d.pop("config")
        if not timing:
            for k in self._TIMING:
                d.pop(k)
        d.update({f"cfg.{k}": v for k, v in sorted(cfg.items())})
        return d

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        row = self.row()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        if header:
            w.writeheader()
        w.writerow(row)
        return buf.getvalue()

    def to_kv(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.row().items())

    def to_table(self) -> str:
        def fmt(v):
            if v is None:
                return "-"
            if isinstance(v, float):
                return f"{v:.6g}"
            return str(v)

        row = self.row()
        width = max(len(k) for k in row)
        return "\n".join(f"{k:<{width}}  {fmt(v)}" for k, v in row.items())
