"""Sensor noise threat model.

Every feature but the last is a reading of the time-series sensor and gets ``eps_series``; the
last feature is the scalar sensor and gets ``eps_scalar``. Bounds are absolute, in normalized
units, and the resulting box is clipped to ``[clip_lo, clip_hi]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputShapeError
from .schema import PerturbationSpec


@dataclass(frozen=True, slots=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.array(self.lo, dtype=np.float64)
        hi = np.array(self.hi, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise InputShapeError(f"Box bounds must be vectors of equal length, got {lo.shape}, {hi.shape}")
        if np.any(lo > hi):
            raise DomainError("Box lower bounds must not exceed upper bounds")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return int(self.lo.shape[0])

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    @property
    def is_point(self) -> bool:
        return bool(np.array_equal(self.lo, self.hi))


def eps_vector(spec: PerturbationSpec, input_dim: int) -> np.ndarray:
    eps = np.full(input_dim, spec.eps_series, dtype=np.float64)
    eps[-1] = spec.eps_scalar
    return eps


def scaled(spec: PerturbationSpec, factor: float) -> PerturbationSpec:
    """Return ``spec`` with both noise levels multiplied by ``factor``."""

    return spec.model_copy(
        update={"eps_series": spec.eps_series * factor, "eps_scalar": spec.eps_scalar * factor}
    )


def _check_range(spec: PerturbationSpec, X: np.ndarray) -> None:
    if np.any(X < spec.clip_lo) or np.any(X > spec.clip_hi) or not np.isfinite(X).all():
        raise DomainError(
            f"Inputs must lie within the normalized range [{spec.clip_lo}, {spec.clip_hi}]"
        )


def boxes_of(spec: PerturbationSpec, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`box_of`: return the ``(lo, hi)`` matrices for the rows of ``X``."""

    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputShapeError(f"Expected a matrix of inputs, got shape {X.shape}")
    _check_range(spec, X)
    eps = eps_vector(spec, X.shape[1])
    lo = np.maximum(spec.clip_lo, X - eps)
    hi = np.minimum(spec.clip_hi, X + eps)
    return lo, hi


def box_of(spec: PerturbationSpec, x: np.ndarray) -> Box:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputShapeError(f"Expected an input vector, got shape {x.shape}")
    lo, hi = boxes_of(spec, x[None, :])
    return Box(lo[0], hi[0])


def sample_uniform(box: Box, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw one point (or ``size`` points) uniformly from ``box``."""

    shape = (box.dim,) if size is None else (size, box.dim)
    z = box.lo + (box.hi - box.lo) * rng.random(shape)
    # rounding in lo + width * u can overshoot hi by one ulp
    return np.minimum(np.maximum(z, box.lo), box.hi)


def contains(box: Box, z: np.ndarray) -> bool:
    z = np.asarray(z, dtype=np.float64)
    return bool(z.shape == box.lo.shape and np.all(box.lo <= z) and np.all(z <= box.hi))


__all__ = [
    "Box",
    "box_of",
    "boxes_of",
    "contains",
    "eps_vector",
    "sample_uniform",
    "scaled",
]
