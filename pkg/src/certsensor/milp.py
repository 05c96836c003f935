"""Exact output bounds over a box by big-M branch-and-bound.

Only unstable hidden units get a continuous ``h_j`` and a binary ``δ_j``; stable units are
substituted directly into the objective. With ``a_j(z) = W1_j·z + b1_j`` and interval bounds
``l_j < 0 < u_j`` the rows are::

    W1_j·z - h_j            <= -b1_j          h_j >= a_j(z)
    h_j - u_j·δ_j           <= 0              h_j <= u_j·δ_j
    h_j - W1_j·z - l_j·δ_j  <= b1_j - l_j     h_j <= a_j(z) - l_j·(1 - δ_j)

with ``h_j ∈ [0, u_j]`` and ``δ_j ∈ [0, 1]`` (or fixed at a branch). Each node solves the LP
relaxation with :func:`certsensor.lp.solve`; nodes are explored best bound first and the
incumbent starts from attack points, so a completed search never reports a bound below the
attack's error.
"""

from __future__ import annotations

import heapq
import logging
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from .artifacts import atomic_write
from .attack import pgd_attack, pgd_extremum
from .bounds import BoundPair, Phase, certified_relative_error, dual_output_bounds, preactivation_intervals
from .data import Dataset
from .lp import LpProblem, solve
from .network import DenseNet
from .perturb import Box, box_of
from .schema import AttackConfig, PerturbationSpec

logger = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-9


class Certificate(BaseModel):
    """Verification record of one example."""

    example_id: int
    method: Literal["dual", "milp"]
    bounds: BoundPair
    witness_max: list[float] | None = None
    witness_min: list[float] | None = None
    node_count: int = 0
    status: Literal["certified", "timeout"] = "certified"
    gap: float = 0.0
    seconds: float = Field(default=0.0, ge=0.0)

    def relative_error(self, y: float) -> float:
        return certified_relative_error(self.bounds, y)


# ---------------------------------------------------------------------------
# Formulation
# ---------------------------------------------------------------------------


@dataclass(slots=True, eq=False)
class MilpFormulation:
    net: DenseNet
    box: Box
    l: np.ndarray  # noqa: E741
    u: np.ndarray
    phase: np.ndarray
    unstable: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @classmethod
    def build(cls, net: DenseNet, box: Box) -> MilpFormulation:
        intervals = preactivation_intervals(net, box)
        unstable = intervals.unstable
        K, U = net.input_dim, unstable.size
        W = net.W1[unstable]
        l, u = intervals.l[unstable], intervals.u[unstable]  # noqa: E741
        h = K + np.arange(U)
        d = K + U + np.arange(U)
        rows = np.arange(U)

        A = np.zeros((3 * U, K + 2 * U))
        A[rows, :K] = W
        A[rows, h] = -1.0
        A[U + rows, h] = 1.0
        A[U + rows, d] = -u
        A[2 * U + rows, :K] = -W
        A[2 * U + rows, h] = 1.0
        A[2 * U + rows, d] = -l
        b = np.concatenate([-net.b1[unstable], np.zeros(U), net.b1[unstable] - l])

        lb = np.concatenate([box.lo, np.zeros(2 * U)])
        ub = np.concatenate([box.hi, u, np.ones(U)])
        return cls(net, box, intervals.l, intervals.u, intervals.phase, unstable, A, b, lb, ub)

    @property
    def n_binary(self) -> int:
        return int(self.unstable.size)

    def objective(self, c: float) -> tuple[np.ndarray, float]:
        """Coefficients and constant of ``c · f`` in the MILP variables."""

        net = self.net
        active = self.phase == Phase.ACTIVE
        coef = np.zeros(self.A.shape[1])
        coef[: net.input_dim] = c * (net.w2[active] @ net.W1[active])
        coef[net.input_dim : net.input_dim + self.n_binary] = c * net.w2[self.unstable]
        constant = c * (float(net.w2[active] @ net.b1[active]) + net.b2)
        return coef, constant

    def relaxation(self, coef: np.ndarray, fixed: dict[int, int]) -> LpProblem:
        lb, ub = self.lb.copy(), self.ub.copy()
        offset = self.net.input_dim + self.n_binary
        for j, value in fixed.items():
            lb[offset + j] = ub[offset + j] = float(value)
        return LpProblem(c=coef, A=self.A, b=self.b, lb=lb, ub=ub, sense="maximize")


# ---------------------------------------------------------------------------
# Branch and bound
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class _Search:
    value: float  # proved upper bound on max c·f, at most gap above the witness
    witness: np.ndarray
    nodes: int
    gap: float
    complete: bool


def _branch_unit(form: MilpFormulation, delta: np.ndarray) -> int | None:
    fraction = np.minimum(delta, 1.0 - delta)
    fractional = np.flatnonzero(fraction > INTEGRALITY_TOL)
    if fractional.size == 0:
        return None
    j = form.unstable
    influence = np.abs(form.net.w2[j]) * (form.u[j] - form.l[j])
    # most fractional first, then largest potential influence
    order = np.lexsort((-influence[fractional], -fraction[fractional]))
    return int(fractional[order[0]])


def _maximize(
    form: MilpFormulation,
    c: float,
    seeds: Sequence[np.ndarray],
    tol: float,
    node_limit: int,
) -> _Search:
    net, box = form.net, form.box
    K = net.input_dim

    candidates = np.stack([np.clip(z, box.lo, box.hi) for z in seeds])
    scores = c * net.predict(candidates)
    best = int(np.argmax(scores))
    incumbent, witness = float(scores[best]), candidates[best]

    if form.n_binary == 0:
        # f is affine on the box: the gradient sign picks the maximizing corner
        corner = np.where(c * net.input_gradient(box.center[None, :])[0] >= 0.0, box.hi, box.lo)
        value = c * net.forward(corner)
        if value > incumbent:
            incumbent, witness = value, corner
        return _Search(incumbent, witness, 0, 0.0, True)

    coef, constant = form.objective(c)
    delta_slice = slice(K + form.n_binary, K + 2 * form.n_binary)
    discarded = -np.inf
    heap: list[tuple[float, int, dict[int, int], np.ndarray]] = []
    counter = 0
    nodes = 0

    def expand(fixed: dict[int, int]) -> None:
        nonlocal counter, nodes, incumbent, witness, discarded
        solution = solve(form.relaxation(coef, fixed))
        nodes += 1
        if not solution.is_optimal:
            return
        bound = solution.value + constant
        z = np.clip(solution.point[:K], box.lo, box.hi)
        value = c * net.forward(z)
        if value > incumbent:
            incumbent, witness = value, z
        if bound <= incumbent + tol:
            discarded = max(discarded, bound)
            return
        heapq.heappush(heap, (-bound, counter, fixed, solution.point[delta_slice]))
        counter += 1

    expand({})
    while heap:
        neg_bound, _, fixed, delta = heap[0]
        if -neg_bound <= incumbent + tol:
            break
        if nodes >= node_limit:
            outer = max(incumbent, -neg_bound, discarded)
            return _Search(outer, witness, nodes, outer - incumbent, False)
        heapq.heappop(heap)
        j = _branch_unit(form, delta)
        if j is None:
            # integral relaxation: its point was already scored as a candidate
            discarded = max(discarded, -neg_bound)
            continue
        for value in (0, 1):
            expand({**fixed, j: value})

    frontier = -heap[0][0] if heap else -np.inf
    gap = max(0.0, max(discarded, frontier) - incumbent)
    # every pruned node is within tol of the incumbent, so gap <= tol
    return _Search(incumbent + gap, witness, nodes, gap, True)


def exact_output_bounds(
    net: DenseNet,
    box: Box,
    tol: float = 1e-6,
    node_limit: int = 1_000_000,
    *,
    seeds: Iterable[np.ndarray] = (),
    attack: AttackConfig | None = None,
    example_id: int = 0,
) -> Certificate:
    """Maximize and minimize ``f`` over ``box`` and wrap both results in a certificate."""

    started = time.perf_counter()
    attack = attack or AttackConfig()
    form = MilpFormulation.build(net, box)
    start = box.center
    seeds = [np.asarray(z, dtype=np.float64) for z in seeds]

    upper = _maximize(form, +1.0, [start, *seeds, pgd_extremum(net, start, box, +1.0, attack)], tol, node_limit)
    lower = _maximize(form, -1.0, [start, *seeds, pgd_extremum(net, start, box, -1.0, attack)], tol, node_limit)

    complete = upper.complete and lower.complete
    if not complete:
        logger.warning("Example %d hit the node limit (%d nodes)", example_id, node_limit)
    cert = Certificate(
        example_id=example_id,
        method="milp",
        bounds=BoundPair(lower=-lower.value, upper=upper.value),
        witness_max=upper.witness.tolist(),
        witness_min=lower.witness.tolist(),
        node_count=upper.nodes + lower.nodes,
        status="certified" if complete else "timeout",
        gap=max(upper.gap, lower.gap),
        seconds=time.perf_counter() - started,
    )
    logger.debug("Example %d: %d nodes, %d unstable units", example_id, cert.node_count, form.n_binary)
    return cert


def dual_certificate(net: DenseNet, box: Box, example_id: int = 0) -> Certificate:
    started = time.perf_counter()
    bounds = dual_output_bounds(net, box)
    return Certificate(
        example_id=example_id,
        method="dual",
        bounds=bounds,
        seconds=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class _Job:
    net: DenseNet
    spec: PerturbationSpec
    attack: AttackConfig
    method: Literal["dual", "milp"]
    tol: float
    node_limit: int
    seed: int


def _verify_one(job: _Job, example_id: int, x: np.ndarray, y: float) -> Certificate:
    box = box_of(job.spec, x)
    if job.method == "dual":
        return dual_certificate(job.net, box, example_id)
    z_star, _ = pgd_attack(job.net, x, y, box, job.attack, np.random.default_rng([job.seed, example_id]))
    return exact_output_bounds(
        job.net,
        box,
        job.tol,
        job.node_limit,
        seeds=(x, z_star),
        attack=job.attack,
        example_id=example_id,
    )


def _verify_chunk(job: _Job, items: list[tuple[int, np.ndarray, float]]) -> list[Certificate]:
    return [_verify_one(job, i, x, y) for i, x, y in items]


def verify_dataset(
    net: DenseNet,
    examples: Dataset,
    spec: PerturbationSpec,
    tol: float = 1e-6,
    *,
    method: Literal["dual", "milp"] = "milp",
    node_limit: int = 1_000_000,
    attack: AttackConfig | None = None,
    ids: Sequence[int] | None = None,
    workers: int = 1,
    seed: int = 0,
) -> list[Certificate]:
    """One certificate per example, in input order whatever the number of workers."""

    ids = list(range(len(examples))) if ids is None else list(ids)
    job = _Job(net, spec, attack or AttackConfig(), method, tol, node_limit, seed)
    items = [(ids[i], examples.X[i], float(examples.Y[i])) for i in range(len(examples))]
    if not items:
        return []

    if workers <= 1 or len(items) == 1:
        certs = _verify_chunk(job, items)
    else:
        size = -(-len(items) // (workers * 4))
        chunks = [items[i : i + size] for i in range(0, len(items), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            certs = [c for chunk in pool.map(_verify_chunk, [job] * len(chunks), chunks) for c in chunk]

    timeouts = sum(cert.status == "timeout" for cert in certs)
    logger.info("Verified %d examples with %s (%d timeouts)", len(certs), method, timeouts)
    return certs


def write_certificates(path: str | Path, certs: Iterable[Certificate]) -> Path:
    with atomic_write(path) as handle:
        for cert in certs:
            handle.write(cert.model_dump_json() + "\n")
    return Path(path)


def read_certificates(path: str | Path) -> list[Certificate]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [Certificate.model_validate_json(line) for line in lines if line.strip()]


__all__ = [
    "Certificate",
    "MilpFormulation",
    "dual_certificate",
    "exact_output_bounds",
    "read_certificates",
    "verify_dataset",
    "write_certificates",
]
