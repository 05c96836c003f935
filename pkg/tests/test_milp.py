from __future__ import annotations

import itertools

import numpy as np
import pytest

from certsensor.attack import pgd_dataset
from certsensor.bounds import certified_relative_error, dual_output_bounds
from certsensor.data import Dataset, DatasetMeta
from certsensor.lp import solve
from certsensor.milp import (
    Certificate,
    MilpFormulation,
    dual_certificate,
    exact_output_bounds,
    read_certificates,
    verify_dataset,
    write_certificates,
)
from certsensor.perturb import Box, box_of, contains
from certsensor.schema import AttackConfig, PerturbationSpec

linprog = pytest.importorskip("scipy.optimize").linprog

WIDE = PerturbationSpec(eps_series=0.2, eps_scalar=0.2)


def enumerate_phases(net, box: Box) -> tuple[float, float]:
    """Exact extrema by solving one LP per activation pattern of the unstable units."""

    form = MilpFormulation.build(net, box)
    active = form.phase == 1
    lowest, highest = np.inf, -np.inf
    for pattern in itertools.product((0, 1), repeat=form.n_binary):
        on = active.copy()
        on[form.unstable] = np.asarray(pattern, dtype=bool)
        rows, rhs = [], []
        for j, unit in enumerate(form.unstable):
            # on: W1 z + b1 >= 0, off: W1 z + b1 <= 0
            sign = -1.0 if pattern[j] else 1.0
            rows.append(sign * net.W1[unit])
            rhs.append(-sign * net.b1[unit])
        gradient = net.w2[on] @ net.W1[on]
        constant = float(net.w2[on] @ net.b1[on]) + net.b2
        kwargs = {"A_ub": np.array(rows), "b_ub": np.array(rhs)} if rows else {}
        bounds = list(zip(box.lo, box.hi))
        top = linprog(-gradient, bounds=bounds, method="highs", **kwargs)
        if top.status != 0:
            continue
        bottom = linprog(gradient, bounds=bounds, method="highs", **kwargs)
        highest = max(highest, -top.fun + constant)
        lowest = min(lowest, bottom.fun + constant)
    return lowest, highest


def dataset(X: np.ndarray, Y: np.ndarray) -> Dataset:
    return Dataset(X, Y, DatasetMeta(input_dim=X.shape[1], n=len(Y)))


class TestExactOutputBounds:
    def test_point_box_needs_no_branching(self, make_net):
        rng = np.random.default_rng(0)
        net = make_net(rng, 3, 5)
        x = rng.random(3)
        cert = exact_output_bounds(net, Box(x, x))
        assert cert.node_count == 0
        assert cert.status == "certified"
        assert cert.bounds.lower == pytest.approx(net.forward(x), abs=1e-12)
        assert cert.bounds.upper == pytest.approx(net.forward(x), abs=1e-12)

    def test_single_unit(self, hand_net):
        cert = exact_output_bounds(hand_net, Box(lo=[0.0], hi=[0.15]))
        assert cert.bounds.lower == pytest.approx(0.0, abs=1e-9)
        assert cert.bounds.upper == pytest.approx(0.05, abs=1e-9)
        assert dual_output_bounds(hand_net, Box(lo=[0.0], hi=[0.15])).lower < cert.bounds.lower

    def test_matches_phase_enumeration(self, make_net):
        rng = np.random.default_rng(1)
        for _ in range(30):
            K, m = int(rng.integers(1, 4)), int(rng.integers(1, 7))
            net = make_net(rng, K, m)
            box = box_of(WIDE, rng.random(K))
            cert = exact_output_bounds(net, box, tol=1e-9)
            lowest, highest = enumerate_phases(net, box)
            assert cert.status == "certified"
            assert cert.bounds.upper == pytest.approx(highest, abs=1e-6)
            assert cert.bounds.lower == pytest.approx(lowest, abs=1e-6)

    def test_witnesses_attain_the_bounds(self, make_net):
        rng = np.random.default_rng(2)
        for _ in range(20):
            net = make_net(rng, 3, 6)
            box = box_of(WIDE, rng.random(3))
            cert = exact_output_bounds(net, box)
            assert contains(box, np.array(cert.witness_max))
            assert contains(box, np.array(cert.witness_min))
            assert abs(net.forward(np.array(cert.witness_max)) - cert.bounds.upper) <= 1e-6 + 1e-12
            assert abs(net.forward(np.array(cert.witness_min)) - cert.bounds.lower) <= 1e-6 + 1e-12

    def test_finished_search_reports_the_outer_bound(self, make_net):
        rng = np.random.default_rng(6)
        tol = 1e-3
        for _ in range(20):
            net = make_net(rng, 3, 6)
            box = box_of(WIDE, rng.random(3))
            cert = exact_output_bounds(net, box, tol=tol)
            lowest, highest = enumerate_phases(net, box)
            assert cert.status == "certified"
            assert 0.0 <= cert.gap <= tol + 1e-12
            assert cert.bounds.upper >= highest - 1e-9
            assert cert.bounds.lower <= lowest + 1e-9
            assert cert.bounds.upper <= net.forward(np.array(cert.witness_max)) + tol + 1e-12
            assert cert.bounds.lower >= net.forward(np.array(cert.witness_min)) - tol - 1e-12

    def test_never_looser_than_dual(self, make_net):
        rng = np.random.default_rng(3)
        for _ in range(20):
            net = make_net(rng, 4, 6)
            box = box_of(WIDE, rng.random(4))
            exact = exact_output_bounds(net, box).bounds
            dual = dual_output_bounds(net, box)
            assert exact.upper <= dual.upper + 1e-9
            assert exact.lower >= dual.lower - 1e-9

    def test_root_relaxation_is_tighter_than_dual(self, make_net):
        rng = np.random.default_rng(4)
        checked = 0
        while checked < 20:
            net = make_net(rng, 4, 6)
            box = box_of(WIDE, rng.random(4))
            form = MilpFormulation.build(net, box)
            if form.n_binary == 0:
                continue
            coef, constant = form.objective(+1.0)
            root = solve(form.relaxation(coef, {}))
            assert root.value + constant <= dual_output_bounds(net, box).upper + 1e-9
            checked += 1

    def test_node_limit_keeps_bounds_sound(self, make_net):
        rng = np.random.default_rng(5)
        timeouts = 0
        for _ in range(20):
            net = make_net(rng, 3, 6)
            box = box_of(WIDE, rng.random(3))
            full = exact_output_bounds(net, box, tol=1e-9)
            cut = exact_output_bounds(net, box, tol=1e-9, node_limit=1)
            if cut.status == "timeout":
                timeouts += 1
                assert cut.gap > 0.0
            assert cut.bounds.upper >= full.bounds.upper - 1e-9
            assert cut.bounds.lower <= full.bounds.lower + 1e-9
        assert timeouts > 0


def test_dual_certificate(hand_net):
    cert = dual_certificate(hand_net, Box(lo=[0.0], hi=[0.15]), example_id=4)
    assert cert.method == "dual"
    assert cert.example_id == 4
    assert cert.witness_max is None
    assert cert.bounds.upper == pytest.approx(0.05)


class TestVerifyDataset:
    def test_empty_dataset(self, hand_net):
        assert verify_dataset(hand_net, dataset(np.zeros((0, 1)), np.zeros(0)), PerturbationSpec()) == []

    def test_order_and_ids(self, make_net):
        rng = np.random.default_rng(6)
        net = make_net(rng, 3, 4)
        X, Y = rng.random((3, 3)), rng.uniform(0.2, 1.0, 3)
        certs = verify_dataset(net, dataset(X, Y), PerturbationSpec(), ids=[5, 3, 9])
        assert [c.example_id for c in certs] == [5, 3, 9]
        for cert, x in zip(certs, X):
            assert cert.bounds.lower - 1e-12 <= net.forward(x) <= cert.bounds.upper + 1e-12

    def test_sandwich(self, make_net):
        rng = np.random.default_rng(7)
        spec = PerturbationSpec(eps_series=0.05, eps_scalar=0.01)
        attack = AttackConfig()
        net = make_net(rng, 4, 8, 0.5)
        X, Y = rng.random((40, 4)), rng.uniform(0.1, 1.0, 40)
        examples = dataset(X, Y)

        _, adv = pgd_dataset(net, X, Y, spec, attack, seed=11)
        milp = verify_dataset(net, examples, spec, method="milp", attack=attack, seed=11)
        dual = verify_dataset(net, examples, spec, method="dual")

        exact_err = np.array([c.relative_error(y) for c, y in zip(milp, Y)])
        dual_err = np.array([c.relative_error(y) for c, y in zip(dual, Y)])
        assert np.all(adv - 1e-9 <= exact_err)
        assert np.all(exact_err <= dual_err + 1e-9)
        assert exact_err.mean() <= dual_err.mean() + 1e-9

    def test_workers_give_the_same_certificates(self, make_net):
        rng = np.random.default_rng(8)
        net = make_net(rng, 3, 5)
        examples = dataset(rng.random((10, 3)), rng.uniform(0.2, 1.0, 10))
        serial = verify_dataset(net, examples, PerturbationSpec())
        parallel = verify_dataset(net, examples, PerturbationSpec(), workers=2)
        assert [c.example_id for c in parallel] == list(range(10))
        assert [c.bounds for c in parallel] == [c.bounds for c in serial]
        assert [c.node_count for c in parallel] == [c.node_count for c in serial]


def test_certificates_round_trip(tmp_path, make_net):
    rng = np.random.default_rng(9)
    net = make_net(rng, 3, 4)
    box = box_of(WIDE, rng.random(3))
    certs = [exact_output_bounds(net, box, example_id=0), dual_certificate(net, box, example_id=1)]

    path = write_certificates(tmp_path / "certs.jsonl", certs)

    assert len(path.read_text(encoding="utf-8").splitlines()) == 2
    assert read_certificates(path) == certs


def test_certificate_relative_error():
    cert = Certificate(example_id=0, method="dual", bounds={"lower": 0.45, "upper": 0.55})
    assert cert.relative_error(0.5) == pytest.approx(0.1)
    assert cert.relative_error(0.5) == certified_relative_error(cert.bounds, 0.5)
