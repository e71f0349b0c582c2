"""QoI categories (point-wise, regional-linear, vector) and field containers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .expr import DerivativeBundle, evaluate, parse_expr, to_string

POINT = "point"
REGION = "region"
VECTOR = "vector"
KINDS = (POINT, REGION, VECTOR)

DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def dtype_tag(dtype) -> str:
    dtype = np.dtype(dtype)
    for tag, dt in DTYPES.items():
        if dt == dtype.newbyteorder("<"):
            return tag
    raise ValueError(f"unsupported element type {dtype}; expected float32 or float64")


class ValueRange(NamedTuple):
    lo: float
    hi: float

    @property
    def span(self) -> float:
        return self.hi - self.lo

    @property
    def degenerate(self) -> bool:
        return not self.hi > self.lo


@dataclass
class Field:
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values)
        dtype_tag(self.values.dtype)
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"field {self.name!r} contains non-finite values")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    @property
    def width(self) -> int:
        return self.values.dtype.itemsize

    @property
    def nbytes(self) -> int:
        return self.values.nbytes

    @property
    def value_range(self) -> ValueRange:
        return ValueRange(float(self.values.min()), float(self.values.max()))

    @classmethod
    def from_file(cls, path, shape: Sequence[int], dtype: str = "f32") -> "Field":
        dt = DTYPES[dtype]
        path = Path(path)
        n = int(np.prod(shape))
        size = path.stat().st_size
        if size != n * dt.itemsize:
            raise ValueError(
                f"{path}: {size} bytes but shape {tuple(shape)} x {dtype} needs {n * dt.itemsize}"
            )
        vals = np.fromfile(path, dtype=dt).reshape(tuple(shape))
        return cls(vals, name=path.stem)


@dataclass(frozen=True)
class RegionIter:
    """Rectangular regions over ``shape``; origins step by ``stride`` in row-major order."""

    shape: tuple[int, ...]
    block: tuple[int, ...]
    stride: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.block) != len(self.shape):
            raise ValueError(f"block {self.block} does not match field rank {len(self.shape)}")
        if any(b < 1 for b in self.block):
            raise ValueError("block extents must be positive")
        if self.stride is not None:
            if len(self.stride) != len(self.shape) or any(s < 1 for s in self.stride):
                raise ValueError("stride extents must be positive, one per axis")
            if any(s > b for s, b in zip(self.stride, self.block)):
                raise ValueError("a stride larger than the block would leave points uncovered")

    @property
    def steps(self) -> tuple[int, ...]:
        return tuple(self.stride) if self.stride is not None else tuple(self.block)

    @property
    def tiling(self) -> bool:
        return self.steps == tuple(self.block)

    def origins(self, axis: int) -> np.ndarray:
        n, b, s = self.shape[axis], self.block[axis], self.steps[axis]
        if s >= b:
            return np.arange(0, n, s)
        # overlapping windows: stop once a window reaches the end
        last = max(n - b, 0)
        o = list(range(0, last + 1, s))
        if o[-1] != last:
            o.append(last)
        return np.asarray(o)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(self.origins(a)) for a in range(len(self.shape)))

    def __len__(self) -> int:
        return int(np.prod(self.counts))

    def __iter__(self) -> Iterator[tuple[slice, ...]]:
        per_axis = [self.origins(a) for a in range(len(self.shape))]
        for origin in itertools.product(*per_axis):
            yield tuple(
                slice(int(o), int(min(o + b, n)))
                for o, b, n in zip(origin, self.block, self.shape)
            )

    def sizes(self) -> np.ndarray:
        per_axis = []
        for a in range(len(self.shape)):
            o = self.origins(a)
            per_axis.append(np.minimum(o + self.block[a], self.shape[a]) - o)
        out = per_axis[0]
        for s in per_axis[1:]:
            out = np.multiply.outer(out, s)
        return out.reshape(self.counts)

    def block_ids(self) -> np.ndarray:
        """Flat region id of every point (tilings only)."""
        if not self.tiling:
            raise ValueError("block ids are only defined for non-overlapping tilings")
        idx = np.ix_(*(np.arange(n) // b for n, b in zip(self.shape, self.block)))
        return np.ravel_multi_index(
            tuple(np.broadcast_arrays(*idx)), self.counts
        ).astype(np.int64)


def block_sums(values: np.ndarray, block: Sequence[int]) -> np.ndarray:
    """Sum ``values`` over a row-major tiling by ``block`` (partial edge blocks kept)."""
    out = values
    for axis, b in enumerate(block):
        starts = np.arange(0, values.shape[axis], b)
        out = np.add.reduceat(out, starts, axis=axis)
    return out


@dataclass(frozen=True)
class QoiSpec:
    kind: str
    expr: str
    bundle: DerivativeBundle
    block: tuple[int, ...] | None = None
    stride: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None
    constant: float = 0.0
    arity: int = 1

    @classmethod
    def point(cls, text: str, variable: str = "x") -> "QoiSpec":
        f = parse_expr(text, (variable,))
        return cls(POINT, to_string(f), DerivativeBundle.univariate(f, variable))

    @classmethod
    def region(
        cls,
        text: str,
        block: Sequence[int],
        *,
        weights: Sequence[float] | np.ndarray | None = None,
        constant: float = 0.0,
        stride: Sequence[int] | None = None,
        variable: str = "x",
    ) -> "QoiSpec":
        """Regional-linear QoI ``C + sum_j w_j g(x_j)``; ``weights=None`` means the block mean."""
        g = parse_expr(text, (variable,))
        block = tuple(int(b) for b in block)
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64)
            if w.size != int(np.prod(block)):
                raise ValueError(f"{w.size} weights for a block of {int(np.prod(block))} points")
            weights = tuple(float(v) for v in w.ravel())
        return cls(
            REGION, to_string(g), DerivativeBundle.univariate(g, variable), block,
            None if stride is None else tuple(int(s) for s in stride),
            weights, float(constant),
        )

    @classmethod
    def vector(cls, text: str, variables: Sequence[str] | None = None, arity: int | None = None) -> "QoiSpec":
        if variables is None:
            variables = default_variables(arity or 3)
        variables = tuple(variables)
        F = parse_expr(text, variables)
        return cls(VECTOR, to_string(F), DerivativeBundle.multivariate(F, variables), arity=len(variables))

    @property
    def variables(self) -> tuple[str, ...]:
        return self.bundle.variables

    def regions(self, shape: Sequence[int]) -> RegionIter:
        if self.kind != REGION:
            raise ValueError("only regional QoIs have regions")
        return RegionIter(tuple(shape), self.block, self.stride)

    def weight_block(self) -> np.ndarray | None:
        if self.weights is None:
            return None
        return np.asarray(self.weights, dtype=np.float64).reshape(self.block)

    def to_header(self) -> dict:
        return {
            "kind": self.kind,
            "expr": self.expr,
            "variables": list(self.variables),
            "block": None if self.block is None else list(self.block),
            "stride": None if self.stride is None else list(self.stride),
            "coefficients": "mean" if self.weights is None else list(self.weights),
            "constant": self.constant,
            "arity": self.arity,
        }

    @classmethod
    def from_header(cls, h: dict) -> "QoiSpec":
        kind = h["kind"]
        if kind == POINT:
            return cls.point(h["expr"], h["variables"][0])
        if kind == REGION:
            coeffs = h.get("coefficients", "mean")
            return cls.region(
                h["expr"], h["block"],
                weights=None if coeffs == "mean" else coeffs,
                constant=h.get("constant", 0.0), stride=h.get("stride"),
                variable=h["variables"][0],
            )
        if kind == VECTOR:
            return cls.vector(h["expr"], h["variables"])
        raise ValueError(f"unknown QoI kind {kind!r}")


def default_variables(arity: int) -> tuple[str, ...]:
    if arity <= 3:
        return ("x", "y", "z")[:arity]
    return tuple(f"x{i + 1}" for i in range(arity))


def _as_arrays(fields) -> list[np.ndarray]:
    if isinstance(fields, (Field, np.ndarray)):
        fields = [fields]
    return [f.values if isinstance(f, Field) else np.asarray(f) for f in fields]


def _check_binding(spec: QoiSpec, arrays: list[np.ndarray]) -> None:
    if len(arrays) != spec.arity:
        raise ValueError(f"QoI needs {spec.arity} field(s), got {len(arrays)}")
    if len({a.shape for a in arrays}) != 1:
        raise ValueError("all bound fields must share one shape")


def evaluate_qoi(spec: QoiSpec, fields, *, strict: bool = True) -> np.ndarray:
    """Q(X): one value per point (point, vector) or per region (regional).

    ``strict=False`` lets nan/inf through instead of raising on domain errors.
    """
    arrays = _as_arrays(fields)
    _check_binding(spec, arrays)
    b = spec.bundle
    if spec.kind == POINT:
        return _eval_point(b, arrays[0], strict)
    if spec.kind == VECTOR:
        env = {v: a.astype(np.float64) for v, a in zip(b.variables, arrays)}
        return evaluate(b.f, env, strict=strict)

    g = _eval_point(b, arrays[0], strict)
    it = spec.regions(arrays[0].shape)
    if spec.weights is None and it.tiling:
        sums = block_sums(g, spec.block)
        return spec.constant + sums / it.sizes()
    return spec.constant + _region_loop(spec, it, g)


def _eval_point(bundle: DerivativeBundle, values: np.ndarray, strict: bool = True) -> np.ndarray:
    return evaluate(bundle.f, {bundle.variables[0]: values.astype(np.float64)}, strict=strict)


def region_weights(spec: QoiSpec, sl: tuple[slice, ...]) -> np.ndarray:
    """Coefficients for one (possibly clipped) region, renormalized to the full-block total."""
    ext = tuple(s.stop - s.start for s in sl)
    W = spec.weight_block()
    if W is None:
        return np.full(ext, 1.0 / int(np.prod(ext)))
    w = W[tuple(slice(0, e) for e in ext)]
    if w.shape != W.shape:
        total, part = W.sum(), w.sum()
        if part != 0.0:
            w = w * (total / part)
    return w


def _region_loop(spec: QoiSpec, it: RegionIter, g: np.ndarray) -> np.ndarray:
    out = np.empty(len(it))
    for r, sl in enumerate(it):
        out[r] = np.sum(region_weights(spec, sl) * g[sl])
    return out.reshape(it.counts)


def qoi_value_range(spec: QoiSpec, fields) -> ValueRange:
    q = evaluate_qoi(spec, fields)
    return ValueRange(float(np.min(q)), float(np.max(q)))
