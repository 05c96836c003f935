from __future__ import annotations

import itertools

import numpy as np
import pytest

from certsensor.attack import (
    noise_error,
    noise_errors,
    pgd_attack,
    pgd_batch,
    pgd_dataset,
    pgd_extremum,
    step_vector,
)
from certsensor.bounds import certified_relative_error, dual_output_bounds
from certsensor.errors import DivisionDomainError, InputShapeError
from certsensor.network import DenseNet
from certsensor.perturb import Box, box_of, contains, sample_uniform
from certsensor.schema import AttackConfig, PerturbationSpec


def test_step_vector_puts_scalar_last():
    assert step_vector(AttackConfig(), 3).tolist() == [0.0025, 0.0025, 0.00025]


class TestPgdAttack:
    def test_zero_steps_returns_clean_input(self, make_net):
        rng = np.random.default_rng(0)
        net = make_net(rng, 4, 6)
        x, y = rng.random(4), 0.4
        z, err = pgd_attack(net, x, y, box_of(PerturbationSpec(), x), AttackConfig(steps=0))
        assert np.array_equal(z, x)
        assert err == pytest.approx(abs(net.forward(x) - y) / y, rel=1e-12)

    def test_linear_region_reaches_best_corner(self, make_net):
        rng = np.random.default_rng(1)
        cfg = AttackConfig(steps=20)
        spec = PerturbationSpec()
        for _ in range(10):
            base = make_net(rng, 4, 3)
            # every unit active on the unit cube, so f is linear on the box
            net = DenseNet(W1=base.W1, b1=np.abs(base.W1).sum(axis=1) + 1.0, w2=base.w2, b2=base.b2)
            x = rng.uniform(0.1, 0.9, 4)
            box = box_of(spec, x)
            y = net.forward(x) - 1.0
            corners = np.array(list(itertools.product(*zip(box.lo, box.hi))))
            best = np.abs(net.predict(corners) - y).max()

            z, err = pgd_attack(net, x, y, box, cfg)

            assert contains(box, z)
            assert abs(net.forward(z) - y) == pytest.approx(best, abs=1e-12)
            assert err == pytest.approx(best / abs(y), rel=1e-9)

    def test_never_below_clean_and_never_above_dual(self, make_net):
        rng = np.random.default_rng(2)
        spec = PerturbationSpec(eps_series=0.03, eps_scalar=0.01)
        for _ in range(100):
            net = make_net(rng, 5, 6)
            x, y = rng.random(5), rng.uniform(0.1, 1.0)
            box = box_of(spec, x)
            z, err = pgd_attack(net, x, y, box, AttackConfig(), rng)
            clean = abs(net.forward(x) - y) / y
            assert contains(box, z)
            assert err >= clean - 1e-12
            assert err <= certified_relative_error(dual_output_bounds(net, box), y) + 1e-9

    def test_random_restarts_stay_in_box(self, make_net):
        rng = np.random.default_rng(3)
        net = make_net(rng, 3, 4)
        x = rng.random(3)
        box = box_of(PerturbationSpec(), x)
        cfg = AttackConfig(restarts=4, random_start=True)
        z, err = pgd_attack(net, x, 0.5, box, cfg, np.random.default_rng(4))
        assert contains(box, z)
        assert err >= abs(net.forward(x) - 0.5) / 0.5 - 1e-12

    def test_zero_target(self, hand_net):
        x = np.array([0.3])
        with pytest.raises(DivisionDomainError):
            pgd_attack(hand_net, x, 0.0, box_of(PerturbationSpec(), x), AttackConfig())

    def test_shape_mismatch(self, hand_net):
        with pytest.raises(InputShapeError):
            pgd_batch(hand_net, np.zeros((2, 1)), np.ones(3), np.zeros((2, 1)), np.ones((2, 1)), AttackConfig())


def test_dataset_attack_matches_single_attacks(make_net):
    rng = np.random.default_rng(5)
    net = make_net(rng, 4, 5)
    X, Y = rng.random((6, 4)), rng.uniform(0.1, 1.0, 6)
    spec = PerturbationSpec()
    cfg = AttackConfig(restarts=2, random_start=True)
    ids = np.arange(10, 16)

    Z, err = pgd_dataset(net, X, Y, spec, cfg, seed=7, ids=ids)

    for i in range(6):
        z, e = pgd_attack(net, X[i], Y[i], box_of(spec, X[i]), cfg, np.random.default_rng([7, ids[i]]))
        assert np.array_equal(Z[i], z)
        assert err[i] == e


@pytest.mark.parametrize("direction", [1.0, -1.0])
def test_extremum_improves_on_the_start(make_net, direction):
    rng = np.random.default_rng(6)
    for _ in range(20):
        net = make_net(rng, 4, 6)
        x = rng.random(4)
        box = box_of(PerturbationSpec(eps_series=0.05, eps_scalar=0.01), x)
        z = pgd_extremum(net, x, box, direction, AttackConfig())
        assert contains(box, z)
        assert direction * net.forward(z) >= direction * net.forward(x) - 1e-12


class TestNoiseError:
    def test_degenerate_box(self, make_net):
        rng = np.random.default_rng(7)
        net = make_net(rng, 3, 4)
        x = rng.random(3)
        clean = abs(net.forward(x) - 0.6) / 0.6
        assert noise_error(net, x, 0.6, Box(x, x), draws=50) == pytest.approx(clean, rel=1e-12)

    def test_constant_network(self):
        net = DenseNet.constant(input_dim=3, hidden_dim=2, value=0.3)
        x = np.array([0.5, 0.5, 0.5])
        err = noise_error(net, x, 0.4, box_of(PerturbationSpec(), x), draws=100)
        assert err == pytest.approx(0.25, rel=1e-12)

    def test_mean_is_at_most_the_worst_draw(self, make_net):
        rng = np.random.default_rng(8)
        net = make_net(rng, 4, 6)
        x, y = rng.random(4), 0.5
        box = box_of(PerturbationSpec(eps_series=0.05, eps_scalar=0.01), x)
        draws = sample_uniform(box, np.random.default_rng(9), size=200)
        worst = (np.abs(net.predict(draws) - y) / y).max()
        assert noise_error(net, x, y, box, draws=200, rng=np.random.default_rng(9)) <= worst + 1e-15

    def test_draws_must_be_positive(self, hand_net):
        x = np.array([0.3])
        with pytest.raises(ValueError):
            noise_error(hand_net, x, 0.2, Box(x, x), draws=0)

    def test_batched_is_seeded_per_example(self, make_net):
        rng = np.random.default_rng(10)
        net = make_net(rng, 3, 4)
        X, Y = rng.random((4, 3)), rng.uniform(0.2, 1.0, 4)
        spec = PerturbationSpec()
        errs = noise_errors(net, X, Y, spec, draws=30, seed=2)
        again = noise_errors(net, X, Y, spec, draws=30, seed=2)
        assert np.array_equal(errs, again)
        single = noise_error(net, X[1], Y[1], box_of(spec, X[1]), 30, np.random.default_rng([2, 1]))
        assert errs[1] == single
