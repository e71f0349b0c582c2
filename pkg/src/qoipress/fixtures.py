"""Synthetic fields and the QoI catalog used by tests, scripts and the benchmark."""

from __future__ import annotations

import os
from typing import Callable

import numpy as np

from .qoi import QoiSpec

SHAPE = (64, 64, 64)


def seed_from_env(default: int = 0) -> int:
    raw = os.environ.get("QPET_SEED")
    if raw is None or raw == "":
        return default
    return int(raw)


def smooth_sinusoid(shape=SHAPE, seed: int = 0, dtype=np.float32) -> np.ndarray:
    """Sum of a few low-frequency plane waves, values roughly in [1, 3]."""
    rng = np.random.default_rng(seed)
    grids = np.meshgrid(*[np.linspace(0.0, 1.0, n, endpoint=False) for n in shape], indexing="ij")
    out = np.zeros(shape)
    for _ in range(3):
        k = rng.integers(1, 4, size=len(shape))
        phase = rng.uniform(0, 2 * np.pi)
        out += np.sin(2 * np.pi * sum(ki * g for ki, g in zip(k, grids)) + phase)
    return (2.0 + out / 3.0).astype(dtype)


def gaussian_random_field(shape=SHAPE, seed: int = 0, corr: float = 6.0) -> np.ndarray:
    """Unit-variance smooth Gaussian noise (FFT low-pass with Gaussian kernel)."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(shape)
    freqs = np.meshgrid(*[np.fft.fftfreq(n) for n in shape], indexing="ij")
    k2 = sum(f * f for f in freqs)
    smooth = np.fft.ifftn(np.fft.fftn(noise) * np.exp(-2 * (np.pi * corr) ** 2 * k2)).real
    return (smooth - smooth.mean()) / smooth.std()


def lognormal(shape=SHAPE, seed: int = 0, sigma: float = 2.0, dtype=np.float32) -> np.ndarray:
    """exp(sigma * GRF): positive with a long upper tail."""
    return np.exp(sigma * gaussian_random_field(shape, seed)).astype(dtype)


def piecewise_constant(shape=SHAPE, seed: int = 0, cell: int = 16, dtype=np.float32) -> np.ndarray:
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(1.0, 5.0, size=tuple(-(-n // cell) for n in shape))
    out = coarse
    for ax in range(len(shape)):
        out = np.repeat(out, cell, axis=ax)
    return out[tuple(slice(0, n) for n in shape)].astype(dtype)


FIELDS: dict[str, Callable[..., np.ndarray]] = {
    "sinusoid": smooth_sinusoid,
    "lognormal": lognormal,
    "piecewise": piecewise_constant,
}


def make_fields(name: str, arity: int = 1, shape=SHAPE, seed: int = 0) -> list[np.ndarray]:
    """``arity`` independent realisations of fixture ``name`` (seeds seed, seed+1, ...)."""
    gen = FIELDS[name]
    return [gen(shape, seed=seed + j) for j in range(arity)]


def catalog(block=(4, 4, 4)) -> dict[str, QoiSpec]:
    """Point-wise, regional and vector QoIs exercised by the evaluation."""
    return {
        "x^2": QoiSpec.point("x^2"),
        "log2(x)": QoiSpec.point("log2(x)"),
        "exp(x)": QoiSpec.point("exp(x)"),
        "1/(x+0)": QoiSpec.point("1/(x+0)"),
        "x^3": QoiSpec.point("x^3"),
        "avg x^2": QoiSpec.region("x^2", block),
        "avg x^3": QoiSpec.region("x^3", block),
        "x^2+y^2+z^2": QoiSpec.vector("x^2+y^2+z^2"),
        "sqrt(x^2+y^2+z^2)": QoiSpec.vector("sqrt(x^2+y^2+z^2)"),
        "x*y*z": QoiSpec.vector("x*y*z"),
    }
