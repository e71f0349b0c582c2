"""End-to-end QoI-preserving compression: bounds, tuning, codec, validation."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import codec
from .codec import Archive, CodecConfig
from .ebtune import EbPlan, TuneParams, pointwise_bounds, tune_plan
from .metrics import (
    QualityReport, bit_rate, compression_ratio, max_abs_error, max_rel_error, psnr_qoi,
)
from .qoi import QoiSpec, evaluate_qoi, qoi_value_range
from .validate import max_qoi_error, validate_and_correct

# relative -> absolute conversion shaves this much so rounding cannot push the
# achieved relative error above the requested one
REL_SAFETY = 1.0 - 1e-12


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class Bounds:
    """User bounds: exactly one of ``*_rel`` / ``*_abs`` per quantity (tau may be inf)."""

    eb_rel: float | None = None
    eb_abs: float | None = None
    tau_rel: float | None = None
    tau_abs: float | None = None

    def __post_init__(self):
        if (self.eb_rel is None) == (self.eb_abs is None):
            raise BoundError("give exactly one of a relative or absolute data error bound")
        if (self.tau_rel is None) == (self.tau_abs is None):
            raise BoundError("give exactly one of a relative or absolute QoI tolerance")
        for name in ("eb_rel", "eb_abs", "tau_rel", "tau_abs"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise BoundError(f"{name} must be positive")
        for name in ("eb_rel", "eb_abs"):
            v = getattr(self, name)
            if v is not None and math.isinf(v):
                raise BoundError(f"{name} must be finite")

    def data_abs(self, x: np.ndarray) -> float:
        if self.eb_abs is not None:
            return float(self.eb_abs)
        span = float(np.max(x)) - float(np.min(x))
        if not span > 0:
            raise BoundError("data range is degenerate (constant field); pass --eb-abs instead")
        return self.eb_rel * span * REL_SAFETY

    def qoi_abs(self, spec: QoiSpec, fields) -> float:
        if self.tau_abs is not None:
            return float(self.tau_abs)
        if math.isinf(self.tau_rel):
            return math.inf
        rng = qoi_value_range(spec, fields)
        if rng.degenerate:
            raise BoundError("QoI value range is degenerate; pass --qoi-tol-abs instead")
        return self.tau_rel * rng.span * REL_SAFETY


@dataclass
class Result:
    archives: list[Archive]
    recons: list[np.ndarray]
    plans: list[EbPlan]
    tau_abs: float
    eps_abs: list[float]
    n_corrections: int
    compress_s: float
    meta: dict = field(default_factory=dict)

    def blobs(self) -> list[bytes]:
        return [a.to_bytes() for a in self.archives]

    @property
    def archive_bytes(self) -> int:
        return sum(len(b) for b in self.blobs())


def _sampler(x: np.ndarray, plan: EbPlan, cfg: CodecConfig):
    def run(candidate: float) -> float:
        return codec.estimate_cr(x, candidate, cfg.sample_edge, pointwise=plan.eps, cfg=cfg)
    return run


def compress_fields(
    fields,
    spec: QoiSpec,
    bounds: Bounds,
    params: TuneParams = TuneParams(),
    cfg: CodecConfig = CodecConfig(),
    *,
    tune: bool = True,
) -> Result:
    """Compress the field(s) bound to ``spec`` so that both error bounds hold.

    Returns one archive per field; corrections are already attached.
    """
    arrays = [np.asarray(f) for f in (fields if isinstance(fields, (list, tuple)) else [fields])]
    if len(arrays) != spec.arity:
        raise ValueError(f"QoI needs {spec.arity} field(s), got {len(arrays)}")
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("input contains non-finite values")
    eps_abs = [bounds.data_abs(a) for a in arrays]
    tau_abs = bounds.qoi_abs(spec, arrays)

    t0 = time.perf_counter()
    plans = pointwise_bounds(spec, arrays, tau_abs, eps_abs, params)
    if tune and math.isfinite(tau_abs):
        plans = [tune_plan(p, _sampler(a, p, cfg), params) for p, a in zip(plans, arrays)]

    archives, recons = [], []
    for j, (a, p) in enumerate(zip(arrays, plans)):
        header = {
            "eb_user": eps_abs[j],
            "eb_rel": bounds.eb_rel,
            "tau_abs": tau_abs if math.isfinite(tau_abs) else None,
            "tau_rel": bounds.tau_rel if bounds.tau_rel is None or math.isfinite(bounds.tau_rel) else None,
            "qoi": spec.to_header(),
            "field_index": j,
            "n_fields": len(arrays),
            "tune": {**asdict(params), "quantile": p.quantile, "enabled": tune},
        }
        arc, rec = codec.compress(a, p.eps, p.eps_g, header, cfg)
        archives.append(arc)
        recons.append(rec)

    corr, _ = validate_and_correct(arrays, recons, spec, tau_abs)
    values = corr.values(arrays)
    archives = [
        codec.attach_corrections(arc, ix, v, cfg)
        for arc, ix, v in zip(archives, corr.indices, values)
    ]
    recons = corr.apply(arrays, recons)
    elapsed = time.perf_counter() - t0
    return Result(archives, recons, plans, tau_abs, eps_abs, corr.count, elapsed)


def tau_header(h: dict) -> float:
    t = h.get("tau_abs")
    return math.inf if t is None else float(t)


def report(
    originals,
    recons,
    spec: QoiSpec,
    archive_bytes: int,
    *,
    n_corrections: int = 0,
    compress_s: float | None = None,
    decompress_s: float | None = None,
    eps_abs=None,
    tau_abs: float | None = None,
    config: dict | None = None,
) -> QualityReport:
    originals = [np.asarray(a) for a in originals]
    recons = [np.asarray(r) for r in recons]
    in_bytes = sum(a.nbytes for a in originals)
    width = originals[0].dtype.itemsize
    data_err = max(max_abs_error(a, r) for a, r in zip(originals, recons))
    rels = [max_rel_error(a, r) for a, r in zip(originals, recons)]
    data_rel = None if any(r is None for r in rels) else max(rels)
    qerr = max_qoi_error(originals, recons, spec)
    try:
        psnr = psnr_qoi(evaluate_qoi(spec, originals), evaluate_qoi(spec, recons, strict=False))
    except ValueError:
        psnr = None
    passed = None
    if eps_abs is not None and tau_abs is not None:
        data_ok = all(max_abs_error(a, r) <= e for a, r, e in zip(originals, recons, eps_abs))
        passed = bool(data_ok and qerr.abs <= tau_abs)
    return QualityReport(
        cr=compression_ratio(in_bytes, archive_bytes),
        br=bit_rate(in_bytes, archive_bytes, width),
        max_data_err=data_err,
        max_data_err_rel=data_rel,
        max_qoi_err=qerr.abs,
        max_qoi_err_rel=qerr.rel,
        psnr_q=psnr,
        n_points=int(originals[0].size),
        n_corrections=n_corrections,
        compress_s=compress_s,
        decompress_s=decompress_s,
        input_bytes=in_bytes,
        archive_bytes=archive_bytes,
        passed=passed,
        config=dict(config or {}),
    )


# ---------------------------------------------------------------------------
# baseline: uniform bound found by bisection on the QoI error


@dataclass
class BaselineResult:
    eps: float | None
    probes: int
    bracketed: bool
    archive_bytes: int | None
    max_qoi_err: float | None
    history: list[tuple[float, float, int]]  # (eps, QoI error, archive bytes)
    recons: list[np.ndarray] | None = None

    def cr(self, input_bytes: int) -> float | None:
        return None if self.archive_bytes is None else input_bytes / self.archive_bytes


def baseline_search(
    fields,
    spec: QoiSpec,
    bounds: Bounds,
    cfg: CodecConfig = CodecConfig(),
    *,
    max_probes: int = 20,
    band: float = 0.8,
    floor_exp: int = 40,
) -> BaselineResult:
    """Largest uniform bound (within the data bound) meeting the QoI tolerance.

    Log-scale bisection, one full compression per probe; stops as soon as the
    achieved QoI error lands in ``[band * tau, tau]``.
    """
    arrays = [np.asarray(f) for f in (fields if isinstance(fields, (list, tuple)) else [fields])]
    eps_abs = [bounds.data_abs(a) for a in arrays]
    tau = bounds.qoi_abs(spec, arrays)
    scale = [e / eps_abs[0] for e in eps_abs]

    def probe(e: float):
        size, recons = 0, []
        for a, s in zip(arrays, scale):
            arc, rec = codec.compress(a, e * s, e * s, None, cfg)
            size += len(arc.to_bytes())
            recons.append(rec)
        return max_qoi_error(arrays, recons, spec).abs, size, recons

    history = []
    best = None
    lo, hi = math.log2(eps_abs[0]) - floor_exp, math.log2(eps_abs[0])
    e = eps_abs[0]
    while len(history) < max_probes:
        err, size, recons = probe(e)
        history.append((e, err, size))
        if err <= tau:
            if best is None or e > best[0]:
                best = (e, err, size, recons)
            if e == eps_abs[0] or err >= band * tau:
                break
            lo = math.log2(e)
        else:
            hi = math.log2(e)
        e = 2.0 ** (0.5 * (lo + hi))
    if best is None:
        return BaselineResult(None, len(history), False, None, None, history)
    return BaselineResult(best[0], len(history), True, best[2], best[1], history, best[3])
