"""Dense bounded-variable simplex.

Solves ``max|min c·v  s.t.  A v <= b,  lb <= v <= ub`` with every bound finite. Variables are
shifted to ``[0, ub - lb]``, each row gets a slack, and rows with a negative right-hand side are
negated and given an artificial variable so the initial basis is the identity. Phase 1 drives the
artificials to zero; phase 2 optimizes the objective with the artificials pinned at zero.

Nonbasic variables sit at either of their bounds, so a pivot may be replaced by a bound flip.
Entering and leaving variables are picked with Bland's smallest-index rule, which rules out
cycling on degenerate vertices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Literal

import numpy as np

from .errors import ShapeError, SolverDefectError

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-8
OPTIMALITY_TOL = 1e-9
PIVOT_TOL = 1e-9
MAX_ITERATIONS = 100_000


class LpStatus(StrEnum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(slots=True, eq=False)
class LpProblem:
    """``A v <= b`` row-wise, with box bounds on every variable."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    sense: Literal["maximize", "minimize"] = "maximize"

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        n = self.c.shape[0]
        self.A = np.asarray(self.A, dtype=np.float64).reshape(-1, n) if n else np.zeros((0, 0))
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        self.lb = np.asarray(self.lb, dtype=np.float64).reshape(-1)
        self.ub = np.asarray(self.ub, dtype=np.float64).reshape(-1)
        if self.A.shape != (self.b.shape[0], n):
            raise ShapeError(f"A has shape {self.A.shape}, expected ({self.b.shape[0]}, {n})")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ShapeError(f"Bounds must have shape ({n},), got {self.lb.shape} and {self.ub.shape}")
        for name in ("c", "A", "b", "lb", "ub"):
            if not np.isfinite(getattr(self, name)).all():
                raise ShapeError(f"{name} contains non-finite entries")
        if self.sense not in ("maximize", "minimize"):
            raise ValueError(f"Unknown sense '{self.sense}'")

    @property
    def n_vars(self) -> int:
        return int(self.c.shape[0])

    @property
    def n_rows(self) -> int:
        return int(self.b.shape[0])


@dataclass(slots=True, eq=False)
class LpSolution:
    status: LpStatus
    value: float
    point: np.ndarray | None
    iterations: int

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


# ---------------------------------------------------------------------------
# Tableau
# ---------------------------------------------------------------------------


@dataclass(slots=True, eq=False)
class _Tableau:
    M: np.ndarray  # row-signed constraint matrix with slacks and artificials
    rhs: np.ndarray
    upper: np.ndarray
    T: np.ndarray  # B^-1 M
    beta: np.ndarray  # values of the basic variables
    basis: np.ndarray
    at_upper: np.ndarray
    iterations: int = 0

    def optimize(self, d: np.ndarray, can_enter: np.ndarray) -> None:
        """Maximize ``d`` over the current feasible basis."""

        while True:
            if self.iterations >= MAX_ITERATIONS:
                raise SolverDefectError(f"Simplex did not terminate after {MAX_ITERATIONS} iterations")
            rc = d - d[self.basis] @ self.T
            improving = np.where(self.at_upper, rc < -OPTIMALITY_TOL, rc > OPTIMALITY_TOL)
            eligible = can_enter & improving
            eligible[self.basis] = False
            candidates = np.flatnonzero(eligible)
            if candidates.size == 0:
                return
            self._step(int(candidates[0]))
            self.iterations += 1

    def _step(self, j: int) -> None:
        sigma = -1.0 if self.at_upper[j] else 1.0
        alpha = sigma * self.T[:, j]
        flip = self.upper[j]

        ratios = np.full(alpha.shape, np.inf)
        upper_basic = self.upper[self.basis]
        falling = alpha > PIVOT_TOL
        rising = (alpha < -PIVOT_TOL) & np.isfinite(upper_basic)
        ratios[falling] = np.maximum(self.beta[falling], 0.0) / alpha[falling]
        ratios[rising] = np.maximum(upper_basic[rising] - self.beta[rising], 0.0) / -alpha[rising]

        t_row = ratios.min() if ratios.size else np.inf
        if not np.isfinite(min(t_row, flip)):
            raise SolverDefectError("Unbounded direction in a box-bounded problem")

        if flip <= t_row:
            self.beta -= flip * alpha
            self.at_upper[j] = not self.at_upper[j]
            return

        tied = np.flatnonzero(ratios <= t_row + 1e-12)
        r = int(tied[np.argmin(self.basis[tied])])
        t = ratios[r]
        leaving = int(self.basis[r])

        self.beta -= t * alpha
        self.beta[r] = t if sigma > 0 else self.upper[j] - t

        self.T[r] /= self.T[r, j]
        column = self.T[:, j].copy()
        column[r] = 0.0
        self.T -= np.outer(column, self.T[r])

        self.basis[r] = j
        self.at_upper[leaving] = bool(alpha[r] < 0.0)
        self.at_upper[j] = False

    def refresh(self) -> None:
        """Recompute the basic values from the original columns."""

        if self.basis.size == 0:
            return
        nonbasic = np.where(self.at_upper, self.upper, 0.0)
        nonbasic[self.basis] = 0.0
        try:
            self.beta = np.linalg.solve(self.M[:, self.basis], self.rhs - self.M @ nonbasic)
        except np.linalg.LinAlgError:
            logger.debug("Singular basis while refreshing; keeping the updated values")

    def values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.upper, 0.0)
        x[self.basis] = self.beta
        return x


def _build(problem: LpProblem) -> tuple[_Tableau, np.ndarray]:
    n, p = problem.n_vars, problem.n_rows
    width = problem.ub - problem.lb
    rhs = problem.b - problem.A @ problem.lb
    negative = np.flatnonzero(rhs < 0.0)
    q = negative.size

    sign = np.where(rhs < 0.0, -1.0, 1.0)
    M = np.zeros((p, n + p + q))
    M[:, :n] = sign[:, None] * problem.A
    M[:, n : n + p] = np.diag(sign)
    M[negative, n + p + np.arange(q)] = 1.0

    basis = np.arange(n, n + p)
    basis[negative] = n + p + np.arange(q)
    upper = np.concatenate([width, np.full(p + q, np.inf)])
    tableau = _Tableau(
        M=M,
        rhs=sign * rhs,
        upper=upper,
        T=M.copy(),
        beta=sign * rhs,
        basis=basis,
        at_upper=np.zeros(n + p + q, dtype=bool),
    )
    artificial = np.zeros(n + p + q, dtype=bool)
    artificial[n + p :] = True
    return tableau, artificial


def solve(problem: LpProblem) -> LpSolution:
    """Optimal vertex of ``problem`` or an infeasible status."""

    n = problem.n_vars
    if np.any(problem.lb > problem.ub):
        return LpSolution(LpStatus.INFEASIBLE, float("nan"), None, 0)

    tableau, artificial = _build(problem)

    if artificial.any():
        tableau.optimize(np.where(artificial, -1.0, 0.0), tableau.upper > 0.0)
        tableau.refresh()
        residual = float(tableau.values()[artificial].sum())
        if residual > FEASIBILITY_TOL:
            logger.debug("Phase 1 ended with artificial residual %.3g", residual)
            return LpSolution(LpStatus.INFEASIBLE, float("nan"), None, tableau.iterations)
        tableau.upper[artificial] = 0.0

    c = problem.c if problem.sense == "maximize" else -problem.c
    d = np.zeros(tableau.upper.shape[0])
    d[:n] = c
    tableau.optimize(d, ~artificial & (tableau.upper > 0.0))
    tableau.refresh()

    point = np.clip(problem.lb + tableau.values()[:n], problem.lb, problem.ub)
    return LpSolution(LpStatus.OPTIMAL, float(problem.c @ point), point, tableau.iterations)


__all__ = [
    "FEASIBILITY_TOL",
    "OPTIMALITY_TOL",
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "solve",
]
