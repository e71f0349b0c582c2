"""Point-wise error bounds from a QoI threshold, and global error-bound tuning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .expr import IDENTITY, DerivativeBundle, evaluate
from .qoi import POINT, REGION, VECTOR, Field, QoiSpec

# bounds below eps_g * 2**-FLOOR_EXP are stored losslessly; 0.0 marks such points
FLOOR_EXP = 40
LOSSLESS = 0.0


def eb_floor(eps_g: float) -> float:
    return math.ldexp(eps_g, -FLOOR_EXP)


@dataclass(frozen=True)
class TuneParams:
    c: float = 2.0
    beta: float = 0.999
    c0: float = 0.95
    quantiles: tuple[float, ...] = (0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.0025)
    q_skip: float = 0.005
    tie_tolerance: float = 0.005

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be >= 0 (0 disables the probabilistic threshold)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.c0 <= 1.0:
            raise ValueError("c0 must lie in (0, 1]")
        if not self.quantiles or any(not 0.0 < q < 1.0 for q in self.quantiles):
            raise ValueError("quantiles must be a non-empty list in (0, 1)")


@dataclass
class EbPlan:
    """Per-point absolute bounds for one field.

    ``eps`` has the field's shape; ``0.0`` marks a point for lossless storage.
    """

    eps: np.ndarray
    eps_g: float
    eps_user: float
    quantile: float | None = None
    k0: int | None = None
    candidates: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def n_tight(self) -> int:
        return int(np.count_nonzero(self.eps < self.eps_g))

    @property
    def n_lossless(self) -> int:
        return int(np.count_nonzero(self.eps == LOSSLESS))

    def clamped(self, eps_g: float) -> "EbPlan":
        return replace(self, eps=np.minimum(self.eps, eps_g), eps_g=float(eps_g))


# ---------------------------------------------------------------------------
# univariate estimate


def eb_univar(x, bundle: DerivativeBundle, t, eps_g):
    """Largest bound keeping the second-order model of the QoI drift within ``t``.

    Vectorized over ``x`` (and ``t`` / ``eps_g`` when given as arrays).
    ``(sqrt(a^2 + 2|b|t) - |a|) / |b|`` is computed in the cancellation-free
    form ``2t / (sqrt(a^2 + 2|b|t) + |a|)``, which also covers ``b == 0``.
    """
    scalar = np.ndim(x) == 0 and np.ndim(t) == 0 and np.ndim(eps_g) == 0
    name = bundle.variables[0]
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    eps_g = np.asarray(eps_g, dtype=np.float64)
    a = np.abs(np.broadcast_to(evaluate(bundle.d1, {name: x}, strict=False), x.shape))
    b = np.abs(np.broadcast_to(evaluate(bundle.d2, {name: x}, strict=False), x.shape))
    with np.errstate(all="ignore"):
        eps = 2.0 * t / (np.sqrt(a * a + 2.0 * b * t) + a)
        eps = np.where(np.isinf(t), np.inf, eps)
        eps = np.where((a == 0) & (b == 0), np.inf, eps)
    eps = np.minimum(eps, eps_g)
    eps = np.where(np.isfinite(a) & np.isfinite(b), eps, _eps_min(eps_g))
    eps = np.minimum(eps, 0.5 * bundle.distance_to_singular(name, x))
    eps = _apply_floor(eps, eps_g)
    return float(eps) if scalar else eps


def _eps_min(eps_g):
    # with no global cap there is no meaningful floor; store such points losslessly
    eps_g = np.asarray(eps_g, dtype=np.float64)
    return np.where(np.isfinite(eps_g), eps_g * 2.0 ** -FLOOR_EXP, LOSSLESS)


def _apply_floor(eps, eps_g):
    eps = np.asarray(eps, dtype=np.float64)
    eps_g = np.asarray(eps_g, dtype=np.float64)
    floor = np.where(np.isfinite(eps_g), eps_g * 2.0 ** -FLOOR_EXP, 0.0)
    return np.where(eps < floor, LOSSLESS, eps)


# ---------------------------------------------------------------------------
# multivariate thresholds


def _threshold_from_sums(sum_abs, sum_sq, T, c, beta):
    sum_abs = np.asarray(sum_abs, dtype=np.float64)
    sum_sq = np.asarray(sum_sq, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(sum_abs > 0, T / sum_abs, np.inf)
        if c == 0:
            t2 = np.zeros_like(t1)
        else:
            t2 = np.where(
                sum_sq > 0,
                c * T * np.sqrt(1.0 / (2.0 * sum_sq * math.log(2.0 / (1.0 - beta)))),
                np.inf,
            )
    return t1, t2


def t_deterministic(alpha: Sequence[float], T: float) -> float:
    s = float(np.sum(np.abs(np.asarray(alpha, dtype=np.float64))))
    return T / s if s > 0 else math.inf


def t_probabilistic(alpha: Sequence[float], T: float, c: float, beta: float) -> float:
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if c == 0:
        return 0.0
    s2 = float(np.sum(np.square(np.asarray(alpha, dtype=np.float64))))
    if s2 == 0:
        return math.inf
    return c * T * math.sqrt(1.0 / (2.0 * s2 * math.log(2.0 / (1.0 - beta))))


def point_threshold(alpha: Sequence[float], T: float, params: TuneParams = TuneParams()) -> float:
    return max(t_deterministic(alpha, T), t_probabilistic(alpha, T, params.c, params.beta))


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f)


def eb_multivar(fields, spec: QoiSpec, T: float, eps_g, params: TuneParams = TuneParams()) -> list[np.ndarray]:
    """Per-point bounds (one array per bound field) for regional or vector QoIs."""
    arrays = [_values(f) for f in (fields if isinstance(fields, (list, tuple)) else [fields])]
    eps_gs = np.broadcast_to(np.asarray(eps_g, dtype=np.float64), (len(arrays),))
    if spec.kind == REGION:
        return [_eb_regional(arrays[0], spec, T, float(eps_gs[0]), params)]
    if spec.kind == VECTOR:
        return _eb_vector(arrays, spec, T, eps_gs, params)
    raise ValueError(f"eb_multivar needs a regional or vector QoI, got {spec.kind!r}")


def _eb_regional(x: np.ndarray, spec: QoiSpec, T: float, eps_g: float, params: TuneParams) -> np.ndarray:
    x = x.astype(np.float64)
    it = spec.regions(x.shape)
    g = spec.bundle
    if not it.tiling:
        from .qoi import region_weights
        eps = np.full(x.shape, eps_g)
        for sl in it:
            w = region_weights(spec, sl)
            t = point_threshold(w.ravel(), T, params)
            e = eb_univar(x[sl], g, t, eps_g)
            eps[sl] = np.minimum(eps[sl], e)
        return eps

    ids = it.block_ids().ravel()
    sizes = it.sizes().ravel()
    W = spec.weight_block()
    if W is None:
        w = 1.0 / sizes[ids]
    else:
        local = np.ix_(*(np.arange(n) % b for n, b in zip(x.shape, spec.block)))
        w = np.broadcast_to(W[local], x.shape).ravel()
        part = np.bincount(ids, weights=w, minlength=len(sizes))
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(part != 0, W.sum() / part, 1.0)
        w = w * scale[ids]
    sum_abs = np.bincount(ids, weights=np.abs(w), minlength=len(sizes))
    sum_sq = np.bincount(ids, weights=w * w, minlength=len(sizes))
    t1, t2 = _threshold_from_sums(sum_abs, sum_sq, T, params.c, params.beta)
    t = np.maximum(t1, t2)[ids].reshape(x.shape)
    return eb_univar(x, g, t, eps_g)


def _eb_vector(arrays, spec: QoiSpec, T: float, eps_gs, params: TuneParams) -> list[np.ndarray]:
    b = spec.bundle
    env = {v: a.astype(np.float64) for v, a in zip(b.variables, arrays)}
    shape = arrays[0].shape
    alphas = [np.broadcast_to(evaluate(p, env, strict=False), shape) for p in b.partials]
    ok = np.logical_and.reduce([np.isfinite(a) for a in alphas])
    sum_abs = sum(np.abs(np.where(ok, a, 0.0)) for a in alphas)
    sum_sq = sum(np.square(np.where(ok, a, 0.0)) for a in alphas)
    t1, t2 = _threshold_from_sums(sum_abs, sum_sq, T, params.c, params.beta)
    t = np.maximum(t1, t2)
    out = []
    for j, (name, x) in enumerate(zip(b.variables, arrays)):
        eg = float(eps_gs[j])
        e = eb_univar(x.astype(np.float64), IDENTITY, t, eg)
        e = np.where(ok, e, _eps_min(eg))
        e = np.minimum(e, 0.5 * b.distance_to_singular(name, env[name]))
        out.append(_apply_floor(e, eg))
    return out


def pointwise_bounds(spec: QoiSpec, fields, tau: float, eps_user, params: TuneParams = TuneParams()) -> list[EbPlan]:
    """Initial (untuned) plans for every bound field; ``eps_user`` may differ per field."""
    arrays = [_values(f) for f in (fields if isinstance(fields, (list, tuple)) else [fields])]
    eus = [float(e) for e in np.broadcast_to(np.asarray(eps_user, dtype=np.float64), (len(arrays),))]
    if math.isinf(tau):
        return [EbPlan(np.full(a.shape, eu), eu, eu) for a, eu in zip(arrays, eus)]
    if spec.kind == POINT:
        eps = [eb_univar(arrays[0].astype(np.float64), spec.bundle, tau, eus[0])]
    else:
        eps = eb_multivar(arrays, spec, tau, eus, params)
    return [EbPlan(np.asarray(e, dtype=np.float64).reshape(a.shape), eu, eu) for e, a, eu in zip(eps, arrays, eus)]


# ---------------------------------------------------------------------------
# global tuning


def slope_threshold(k: int, k0: int, c0: float, eps0: float) -> float:
    return (c0 + (k / k0) * (1.0 - c0)) * eps0


@dataclass
class TuneResult:
    eps_g: float
    quantile: float
    k0: int
    candidates: list[tuple[float, float, float]]  # (quantile, eps, estimated CR)


def tune_global_eb(
    eps,
    sampler: Callable[[float], float],
    params: TuneParams = TuneParams(),
    eps_user: float | None = None,
) -> TuneResult:
    """Pick a global bound from quantiles of ``eps`` and walk it down the gentle slope.

    ``sampler(candidate)`` returns an estimated compression ratio.  Ranks are
    0-indexed; lossless markers (0.0) take no part.
    """
    pos = np.asarray(eps, dtype=np.float64).ravel()
    pos = pos[pos > 0]
    n = pos.size
    if n == 0:
        raise ValueError("empty plan: no positive point-wise bounds to tune from")

    ks = [min(int(math.floor(q * n)), n - 1) for q in params.quantiles]
    part = np.partition(pos, sorted(set(ks)))
    scored: dict[float, float] = {}
    candidates = []
    for q, k in zip(params.quantiles, ks):
        e = float(part[k])
        if e not in scored:
            scored[e] = float(sampler(e))
        candidates.append((q, k, e, scored[e]))

    best_cr = max(c[3] for c in candidates)
    # compare estimated sizes (1/CR); near-ties go to the larger bound
    tied = [c for c in candidates if (1.0 / c[3]) <= (1.0 + params.tie_tolerance) / best_cr]
    q0, k0, eps0, _ = max(tied, key=lambda c: (c[2], c[0]))

    eps_g = eps0
    if q0 <= params.q_skip and k0 > 0:
        smallest = np.sort(np.partition(pos, k0 - 1)[:k0])
        k = k0 - 1
        while k >= 0:
            e = float(smallest[k])
            if e >= slope_threshold(k, k0, params.c0, eps0):
                eps_g = e
            else:
                break
            k -= 1
    if eps_user is not None:
        eps_g = min(eps_g, eps_user)
    return TuneResult(eps_g, q0, k0, [(q, e, cr) for q, _, e, cr in candidates])


def tune_plan(plan: EbPlan, sampler: Callable[[float], float], params: TuneParams = TuneParams()) -> EbPlan:
    if not np.any(plan.eps > 0):
        return plan
    res = tune_global_eb(plan.eps, sampler, params, plan.eps_user)
    tuned = plan.clamped(res.eps_g)
    tuned.quantile, tuned.k0, tuned.candidates = res.quantile, res.k0, res.candidates
    return tuned
