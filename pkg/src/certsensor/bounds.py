"""Certified output bounds from the linear relaxation of the hidden ReLU layer.

For an objective sign ``c`` the dual bound is

    J(c) = c·b2 + Σ_j (ν_j·b1_j + κ_j) + Σ_i max(g_i·lo_i, g_i·hi_i),    g = Σ_j ν_j·W1_j

with ``ĉ = c·w2``, pass-through ``D_j`` (0 inactive, 1 active, ``s_j = u_j/(u_j - l_j)``
unstable), ``ν = ĉ·D`` and the bias correction ``κ_j = ĉ_j·s_j·(-l_j)`` for unstable units with
``ĉ_j > 0``. ``J(+1)`` bounds ``max f`` over the box and ``-J(-1)`` bounds ``min f``.

Everything is computed batched over boxes stacked as ``(n, K)`` matrices; the single-box entry
points are thin wrappers. Phases and the ``ĉ_j > 0`` test are treated as locally constant when
differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DivisionDomainError, EmptyBatchError, InputShapeError
from .network import DenseNet, Gradients
from .perturb import Box

DEGENERATE_WIDTH = 1e-12


class Phase(IntEnum):
    INACTIVE = 0
    ACTIVE = 1
    UNSTABLE = 2


@dataclass(frozen=True, slots=True)
class BoundPair:
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True, slots=True, eq=False)
class PreactivationIntervals:
    l: np.ndarray  # noqa: E741
    u: np.ndarray
    phase: np.ndarray

    @property
    def unstable(self) -> np.ndarray:
        return np.flatnonzero(self.phase == Phase.UNSTABLE)


# ---------------------------------------------------------------------------
# Interval arithmetic
# ---------------------------------------------------------------------------


def _as_boxes(net: DenseNet, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = np.atleast_2d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_2d(np.asarray(hi, dtype=np.float64))
    if lo.shape != hi.shape or lo.shape[1] != net.input_dim:
        raise InputShapeError(
            f"Boxes must be (n, {net.input_dim}) matrices, got {lo.shape} and {hi.shape}"
        )
    return lo, hi


def interval_bounds(net: DenseNet, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return pre-activation bounds ``(l, u)`` of shape ``(n, m)`` for stacked boxes."""

    lo, hi = _as_boxes(net, lo, hi)
    W_pos = np.maximum(net.W1, 0.0)
    W_neg = np.minimum(net.W1, 0.0)
    l = lo @ W_pos.T + hi @ W_neg.T + net.b1  # noqa: E741
    u = hi @ W_pos.T + lo @ W_neg.T + net.b1
    return l, u


def classify(l: np.ndarray, u: np.ndarray) -> np.ndarray:  # noqa: E741
    """Phase of every unit; near-degenerate intervals are classified by their midpoint."""

    degenerate = (u - l) < DEGENERATE_WIDTH
    midpoint_active = (l + u) >= 0.0
    active = (l >= 0.0) | (degenerate & midpoint_active)
    inactive = ~active & ((u <= 0.0) | degenerate)
    phase = np.full(l.shape, Phase.UNSTABLE, dtype=np.int8)
    phase[active] = Phase.ACTIVE
    phase[inactive] = Phase.INACTIVE
    return phase


def preactivation_intervals(net: DenseNet, box: Box) -> PreactivationIntervals:
    l, u = interval_bounds(net, box.lo, box.hi)  # noqa: E741
    return PreactivationIntervals(l=l[0], u=u[0], phase=classify(l, u)[0])


# ---------------------------------------------------------------------------
# Dual bound
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class _Relaxation:
    """Quantities shared by both objective signs for a stack of boxes."""

    net: DenseNet
    lo: np.ndarray
    hi: np.ndarray
    l: np.ndarray  # noqa: E741
    u: np.ndarray
    active: np.ndarray
    unstable: np.ndarray
    slope: np.ndarray

    @classmethod
    def build(cls, net: DenseNet, lo: np.ndarray, hi: np.ndarray) -> _Relaxation:
        lo, hi = _as_boxes(net, lo, hi)
        l, u = interval_bounds(net, lo, hi)  # noqa: E741
        phase = classify(l, u)
        unstable = phase == Phase.UNSTABLE
        width = np.where(unstable, u - l, 1.0)
        slope = np.where(unstable, u / width, 0.0)
        return cls(net, lo, hi, l, u, phase == Phase.ACTIVE, unstable, slope)

    def _terms(self, c: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        c_hat = c * self.net.w2
        passthrough = np.where(self.active, 1.0, self.slope)
        nu = c_hat * passthrough
        corrected = self.unstable & (c_hat > 0.0)
        kappa = np.where(corrected, c_hat * self.slope * (-self.l), 0.0)
        g = nu @ self.net.W1
        return nu, kappa, corrected, g

    def bound(self, c: float) -> np.ndarray:
        """``J(c)`` for every box."""

        nu, kappa, _, g = self._terms(c)
        box_term = np.maximum(g * self.lo, g * self.hi).sum(axis=1)
        return c * self.net.b2 + nu @ self.net.b1 + kappa.sum(axis=1) + box_term

    def backward(self, c: float, upstream: np.ndarray) -> Gradients:
        """Gradient of ``Σ_n upstream_n · J_n(c)`` with respect to the network parameters."""

        net = self.net
        nu, _, corrected, g = self._terms(c)
        c_hat = c * net.w2
        G = upstream[:, None]

        picked = np.where(g * self.hi >= g * self.lo, self.hi, self.lo)
        d_g = G * picked
        d_nu = G * net.b1 + d_g @ net.W1.T
        d_kappa = np.where(corrected, G, 0.0)

        dW1 = nu.T @ d_g
        db1 = (G * nu).sum(axis=0)

        passthrough = np.where(self.active, 1.0, self.slope)
        d_c_hat = (d_nu * passthrough + d_kappa * self.slope * (-self.l)).sum(axis=0)
        d_slope = np.where(self.unstable, d_nu * c_hat, 0.0) + d_kappa * c_hat * (-self.l)
        d_l = -d_kappa * c_hat * self.slope

        width = np.where(self.unstable, self.u - self.l, 1.0)
        d_l = d_l + np.where(self.unstable, d_slope * self.u / width**2, 0.0)
        d_u = np.where(self.unstable, d_slope * (-self.l) / width**2, 0.0)

        positive = net.W1 > 0.0
        negative = net.W1 < 0.0
        dW1 = dW1 + (d_l.T @ self.lo + d_u.T @ self.hi) * positive
        dW1 = dW1 + (d_l.T @ self.hi + d_u.T @ self.lo) * negative
        db1 = db1 + (d_l + d_u).sum(axis=0)

        return Gradients(W1=dW1, b1=db1, w2=c * d_c_hat, b2=float(c * upstream.sum()))


def dual_output_bounds_batch(
    net: DenseNet, lo: np.ndarray, hi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(lower, upper)`` arrays for stacked boxes."""

    relaxation = _Relaxation.build(net, lo, hi)
    upper = relaxation.bound(+1.0)
    lower = -relaxation.bound(-1.0)
    # both signs are rounded independently; at a point box they may cross by an ulp
    return np.minimum(lower, upper), np.maximum(lower, upper)


def dual_output_bounds(net: DenseNet, box: Box) -> BoundPair:
    lower, upper = dual_output_bounds_batch(net, box.lo, box.hi)
    return BoundPair(lower=float(lower[0]), upper=float(upper[0]))


# ---------------------------------------------------------------------------
# Losses and certified errors
# ---------------------------------------------------------------------------


def robust_mse(bounds: BoundPair, y: float) -> float:
    return max((bounds.lower - y) ** 2, (bounds.upper - y) ** 2)


def certified_relative_error(bounds: BoundPair, y: float) -> float:
    if y == 0:
        raise DivisionDomainError("Relative error is undefined for a zero target")
    return max(abs(bounds.lower - y), abs(bounds.upper - y)) / abs(y)


def robust_mse_grad(
    net: DenseNet, lo: np.ndarray, hi: np.ndarray, Y: np.ndarray
) -> tuple[float, Gradients]:
    """Mean robust squared error over stacked boxes and its gradient.

    Ties between the two branches take the upper branch.
    """

    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] == 0:
        raise EmptyBatchError("Cannot compute a loss over an empty batch")
    relaxation = _Relaxation.build(net, lo, hi)
    if Y.shape != (relaxation.lo.shape[0],):
        raise InputShapeError(f"Targets have shape {Y.shape}, expected ({relaxation.lo.shape[0]},)")

    upper = relaxation.bound(+1.0)
    lower = -relaxation.bound(-1.0)
    upper_sq = (upper - Y) ** 2
    lower_sq = (lower - Y) ** 2
    take_upper = upper_sq >= lower_sq
    loss = float(np.mean(np.where(take_upper, upper_sq, lower_sq)))

    n = Y.shape[0]
    d_upper = np.where(take_upper, 2.0 * (upper - Y) / n, 0.0)
    d_lower = np.where(take_upper, 0.0, 2.0 * (lower - Y) / n)
    # lower = -J(-1)
    grads = relaxation.backward(+1.0, d_upper) + relaxation.backward(-1.0, -d_lower)
    return loss, grads


__all__ = [
    "DEGENERATE_WIDTH",
    "BoundPair",
    "Phase",
    "PreactivationIntervals",
    "certified_relative_error",
    "classify",
    "dual_output_bounds",
    "dual_output_bounds_batch",
    "interval_bounds",
    "preactivation_intervals",
    "robust_mse",
    "robust_mse_grad",
]
