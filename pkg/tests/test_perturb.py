from __future__ import annotations

import numpy as np
import pytest

from certsensor.errors import DomainError, InputShapeError
from certsensor.perturb import Box, box_of, boxes_of, contains, eps_vector, sample_uniform, scaled
from certsensor.schema import PerturbationSpec

NULL = PerturbationSpec(eps_series=0.0, eps_scalar=0.0)


class TestBoxOf:
    def test_null_spec_is_a_point(self):
        x = np.array([0.2, 0.7, 0.4])
        box = box_of(NULL, x)
        assert box.is_point
        assert np.array_equal(box.lo, x) and np.array_equal(box.hi, x)

    def test_clipped_at_zero(self):
        box = box_of(PerturbationSpec(), np.array([0.005, 0.5]))
        assert box.lo[0] == 0.0
        assert box.hi[0] == pytest.approx(0.015)

    def test_clipped_at_one(self):
        box = box_of(PerturbationSpec(), np.array([0.998, 0.9995]))
        assert box.hi.tolist() == [1.0, 1.0]

    def test_default_levels(self):
        box = box_of(PerturbationSpec(), np.full(5, 0.5))
        assert box.lo[:-1] == pytest.approx([0.49] * 4)
        assert box.hi[:-1] == pytest.approx([0.51] * 4)
        assert box.lo[-1] == pytest.approx(0.499)
        assert box.hi[-1] == pytest.approx(0.501)

    @pytest.mark.parametrize("value", [-0.01, 1.01, np.nan])
    def test_outside_range(self, value):
        with pytest.raises(DomainError):
            box_of(PerturbationSpec(), np.array([0.5, value]))

    def test_rejects_matrix(self):
        with pytest.raises(InputShapeError):
            box_of(PerturbationSpec(), np.zeros((2, 2)))

    def test_batched_matches_single(self):
        X = np.random.default_rng(0).random((7, 4))
        lo, hi = boxes_of(PerturbationSpec(), X)
        for i in range(7):
            box = box_of(PerturbationSpec(), X[i])
            assert np.array_equal(lo[i], box.lo) and np.array_equal(hi[i], box.hi)


def test_eps_vector_puts_scalar_last():
    assert eps_vector(PerturbationSpec(eps_series=0.02, eps_scalar=0.003), 3).tolist() == [0.02, 0.02, 0.003]


def test_scaled_multiplies_both_levels():
    spec = scaled(PerturbationSpec(), 2.0)
    assert spec.eps_series == pytest.approx(0.02)
    assert spec.eps_scalar == pytest.approx(0.002)


def test_scaling_up_never_shrinks_the_box():
    x = np.random.default_rng(1).random(6)
    small = box_of(PerturbationSpec(), x)
    large = box_of(scaled(PerturbationSpec(), 3.0), x)
    assert np.all(large.lo <= small.lo) and np.all(large.hi >= small.hi)


class TestBox:
    def test_inverted_bounds(self):
        with pytest.raises(DomainError):
            Box(lo=[0.5], hi=[0.4])

    def test_mismatched_lengths(self):
        with pytest.raises(InputShapeError):
            Box(lo=[0.0, 0.0], hi=[1.0])

    def test_contains(self):
        box = Box(lo=[0.0, 0.2], hi=[0.1, 0.3])
        assert contains(box, [0.0, 0.3])
        assert not contains(box, [0.0, 0.31])
        assert not contains(box, [0.05])


class TestSampleUniform:
    def test_degenerate_box(self):
        box = Box(lo=[0.3, 0.6], hi=[0.3, 0.6])
        assert np.array_equal(sample_uniform(box, np.random.default_rng(0)), box.lo)

    def test_mean_of_unit_interval(self):
        draws = sample_uniform(Box(lo=[0.0], hi=[1.0]), np.random.default_rng(2), size=10_000)
        assert abs(draws.mean() - 0.5) <= 0.02

    def test_draws_stay_inside(self):
        box = box_of(PerturbationSpec(), np.random.default_rng(3).random(8))
        draws = sample_uniform(box, np.random.default_rng(4), size=1000)
        assert draws.shape == (1000, 8)
        assert all(contains(box, z) for z in draws)
