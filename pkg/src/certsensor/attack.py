"""Empirical worst case: projected sign-gradient attacks and random noise evaluation.

All searches are vectorized over a stack of boxes. Iterates are projected back onto their box
after every step and the best iterate seen (the clean input included) is returned, so the
reported error never falls below the clean error.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import DivisionDomainError, InputShapeError
from .network import DenseNet
from .perturb import Box, boxes_of, sample_uniform
from .schema import AttackConfig, PerturbationSpec

logger = logging.getLogger(__name__)


def step_vector(cfg: AttackConfig, input_dim: int) -> np.ndarray:
    step = np.full(input_dim, cfg.step_series, dtype=np.float64)
    step[-1] = cfg.step_scalar
    return step


def _relative(pred: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if np.any(Y == 0):
        raise DivisionDomainError("Relative error is undefined for a zero target")
    return np.abs(pred - Y) / np.abs(Y)


def _starts(
    X: np.ndarray, lo: np.ndarray, hi: np.ndarray, cfg: AttackConfig, rng: np.random.Generator
) -> list[np.ndarray]:
    starts: list[np.ndarray] = []
    for restart in range(cfg.restarts):
        if restart == 0 and not cfg.random_start:
            starts.append(X.copy())
        else:
            z = lo + (hi - lo) * rng.random(X.shape)
            starts.append(np.minimum(np.maximum(z, lo), hi))
    return starts


# ---------------------------------------------------------------------------
# Squared-error attack
# ---------------------------------------------------------------------------


def pgd_batch(
    net: DenseNet,
    X: np.ndarray,
    Y: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Maximize ``(f(z) - y)²`` over every box; return ``(Z*, relative errors)``."""

    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.float64).reshape(-1)
    if X.shape != np.shape(lo) or X.shape != np.shape(hi) or Y.shape != (X.shape[0],):
        raise InputShapeError("Inputs, targets and boxes must describe the same examples")
    rng = rng if rng is not None else np.random.default_rng(0)
    step = step_vector(cfg, net.input_dim)

    best_z = X.copy()
    best_sq = (net.predict(X) - Y) ** 2
    for z in _starts(X, lo, hi, cfg, rng):
        for _ in range(cfg.steps + 1):
            pred = net.predict(z)
            sq = (pred - Y) ** 2
            improved = sq > best_sq
            best_z[improved] = z[improved]
            best_sq[improved] = sq[improved]
            # at f(z) = y the squared error is flat; move along +∇f to leave the target
            direction = np.where(pred >= Y, 1.0, -1.0)[:, None]
            z = np.clip(z + step * direction * np.sign(net.input_gradient(z)), lo, hi)

    return best_z, _relative(net.predict(best_z), Y)


def pgd_attack(
    net: DenseNet,
    x: np.ndarray,
    y: float,
    box: Box,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (box.dim,) or box.dim != net.input_dim:
        raise InputShapeError(f"Expected an input of length {net.input_dim}, got {x.shape}")
    Z, err = pgd_batch(net, x[None, :], np.asarray([y]), box.lo[None, :], box.hi[None, :], cfg, rng)
    return Z[0], float(err[0])


def pgd_dataset(
    net: DenseNet,
    X: np.ndarray,
    Y: np.ndarray,
    spec: PerturbationSpec,
    cfg: AttackConfig,
    seed: int = 0,
    ids: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Attack every example on its own; example ``i`` uses the stream ``(seed, ids[i])``.

    Running examples one by one keeps the result identical to the attack the exact verifier
    replays to seed its incumbent.
    """

    X = np.asarray(X, dtype=np.float64)
    ids = np.arange(len(Y)) if ids is None else np.asarray(ids)
    lo, hi = boxes_of(spec, X)
    Z = np.empty_like(X)
    err = np.empty(len(Y), dtype=np.float64)
    for i in range(len(Y)):
        rng = np.random.default_rng([seed, int(ids[i])])
        Z[i], err[i] = pgd_attack(net, X[i], float(Y[i]), Box(lo[i], hi[i]), cfg, rng)
    if len(Y):
        logger.debug("PGD over %d examples: mean relative error %.4g", len(Y), float(np.mean(err)))
    return Z, err


# ---------------------------------------------------------------------------
# Output extremum search
# ---------------------------------------------------------------------------


def pgd_extremum(
    net: DenseNet,
    x: np.ndarray,
    box: Box,
    direction: float,
    cfg: AttackConfig,
) -> np.ndarray:
    """Sign-gradient ascent on ``direction · f(z)`` from ``x``; return the best iterate."""

    z = np.asarray(x, dtype=np.float64)[None, :]
    lo, hi = box.lo[None, :], box.hi[None, :]
    step = step_vector(cfg, net.input_dim)
    # the corner picked by the gradient sign at x is a cheap extra candidate
    corner = np.where(direction * net.input_gradient(z) >= 0.0, hi, lo)
    best_z, best = corner[0], direction * net.predict(corner)[0]
    for _ in range(cfg.steps + 1):
        value = direction * net.predict(z)[0]
        if value > best:
            best_z, best = z[0].copy(), value
        z = np.clip(z + step * direction * np.sign(net.input_gradient(z)), lo, hi)
    return best_z


# ---------------------------------------------------------------------------
# Random noise
# ---------------------------------------------------------------------------


def noise_error(
    net: DenseNet,
    x: np.ndarray,
    y: float,
    box: Box,
    draws: int = 1000,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean relative error over ``draws`` uniform samples of ``box``."""

    if draws < 1:
        raise ValueError("draws must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    Z = sample_uniform(box, rng, size=draws)
    return float(np.mean(_relative(net.predict(Z), np.full(draws, y, dtype=np.float64))))


def noise_errors(
    net: DenseNet,
    X: np.ndarray,
    Y: np.ndarray,
    spec: PerturbationSpec,
    draws: int = 1000,
    seed: int = 0,
) -> np.ndarray:
    """Per-example :func:`noise_error`; example ``i`` draws from the stream ``(seed, i)``."""

    lo, hi = boxes_of(spec, X)
    return np.array(
        [
            noise_error(net, X[i], float(Y[i]), Box(lo[i], hi[i]), draws, np.random.default_rng([seed, i]))
            for i in range(len(Y))
        ],
        dtype=np.float64,
    )


__all__ = [
    "noise_error",
    "noise_errors",
    "pgd_attack",
    "pgd_batch",
    "pgd_dataset",
    "pgd_extremum",
    "step_vector",
]
