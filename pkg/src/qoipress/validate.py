"""QoI validation of a committed reconstruction and lossless correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qoi import POINT, REGION, VECTOR, QoiSpec, evaluate_qoi, qoi_value_range


@dataclass
class Corrections:
    """Flat indices to restore exactly, one array per bound field."""

    indices: list[np.ndarray]

    @property
    def count(self) -> int:
        return int(sum(ix.size for ix in self.indices))

    def values(self, originals) -> list[np.ndarray]:
        return [np.asarray(x).ravel()[ix] for x, ix in zip(originals, self.indices)]

    def apply(self, originals, recons) -> list[np.ndarray]:
        out = []
        for x, r, ix in zip(originals, recons, self.indices):
            r = np.array(r, copy=True)
            r.ravel()[ix] = np.asarray(x).ravel()[ix]
            out.append(r)
        return out


def _qoi_abs_error(spec: QoiSpec, originals, recons) -> np.ndarray:
    q0 = evaluate_qoi(spec, originals)
    q1 = evaluate_qoi(spec, recons, strict=False)
    err = np.abs(q1 - q0)
    return np.where(np.isfinite(err), err, np.inf)


def _listify(x) -> list[np.ndarray]:
    if isinstance(x, (list, tuple)):
        return [np.asarray(a) for a in x]
    return [np.asarray(x)]


def validate_and_correct(originals, recons, spec: QoiSpec, tau_abs: float) -> tuple[Corrections, list[np.ndarray]]:
    """Find QoI violations above ``tau_abs`` and restore the offending data exactly.

    Regional and vector violations restore every member of the region / tuple.
    Returns the correction set and the corrected reconstructions.
    """
    originals, recons = _listify(originals), _listify(recons)
    shape = originals[0].shape
    n = originals[0].size
    if not np.isfinite(tau_abs):
        return Corrections([np.zeros(0, np.int64) for _ in originals]), recons

    marked = np.zeros(n, dtype=bool)
    if spec.kind == POINT or spec.kind == VECTOR:
        err = _qoi_abs_error(spec, originals, recons)
        marked |= (~(err <= tau_abs)).ravel()
    elif spec.kind == REGION:
        it = spec.regions(shape)
        current = recons
        for _ in range(len(it) + 1):
            err = _qoi_abs_error(spec, originals, current).ravel()
            bad = np.flatnonzero(~(err <= tau_abs))
            if bad.size == 0:
                break
            if it.tiling:
                marked |= np.isin(it.block_ids().ravel(), bad)
            else:
                regions = list(it)
                for r in bad:
                    m = np.zeros(shape, dtype=bool)
                    m[regions[r]] = True
                    marked |= m.ravel()
            idx = np.flatnonzero(marked)
            current = Corrections([idx] * len(originals)).apply(originals, recons)
    else:  # pragma: no cover
        raise ValueError(f"unknown QoI kind {spec.kind!r}")

    idx = np.flatnonzero(marked).astype(np.int64)
    corr = Corrections([idx.copy() for _ in originals])
    return corr, corr.apply(originals, recons)


@dataclass
class QoiError:
    abs: float
    rel: float | None


def max_qoi_error(originals, recons, spec: QoiSpec) -> QoiError:
    originals, recons = _listify(originals), _listify(recons)
    err = _qoi_abs_error(spec, originals, recons)
    worst = float(err.max()) if err.size else 0.0
    rng = qoi_value_range(spec, originals)
    return QoiError(worst, None if rng.degenerate else worst / rng.span)
