import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

from bernflow import bernstein
from bernflow.bernstein import BernsteinTensor, Box
from bernflow.flow import (ConditionalFlowModel, FlowModel, InvalidModelError,
                           density_tensor_mass)

from conftest import random_conditional, random_flow


class TestValidation:
    def test_uniform_valid(self):
        FlowModel.uniform((3, 4)).validate()

    def test_wrong_factor_count(self):
        with pytest.raises(InvalidModelError):
            FlowModel((2, 2), [BernsteinTensor(np.ones(2))])

    def test_negative_coefficient_rejected(self):
        with pytest.raises(InvalidModelError):
            FlowModel((2,), [BernsteinTensor([-0.5, 2.5])])

    def test_bad_slice_sum_rejected(self):
        with pytest.raises(InvalidModelError):
            FlowModel((2,), [BernsteinTensor([1.0, 2.0])])

    def test_certificate_raise_accepts_positive_polynomial(self):
        # strictly positive polynomial with one negative Bernstein coefficient;
        # feasibility is certified at a raised degree
        c = np.array([1.2, -0.3, 1.5])
        c = 3.0 * c / c.sum()
        with pytest.raises(InvalidModelError):
            FlowModel((3,), [BernsteinTensor(c)])
        m = FlowModel((3,), [BernsteinTensor(c)], certificate_raise=40)
        assert m.certificate_raise == 40

    def test_certificate_raise_still_rejects_negative_polynomial(self):
        c = np.array([3.0, -4.5, 4.5])  # dips below zero near u ~ 0.45
        c = 3.0 * c / c.sum()
        with pytest.raises(InvalidModelError):
            FlowModel((3,), [BernsteinTensor(c)], certificate_raise=60)


class TestLogDensity:
    def test_uniform_zero(self, rng):
        m = FlowModel.uniform((3, 2))
        for u in rng.random((5, 2)):
            assert m.log_density(u) == pytest.approx(0.0, abs=1e-12)

    def test_linear_density(self):
        m = FlowModel((2,), [BernsteinTensor([0.0, 2.0])])  # density 2u
        assert m.log_density([0.5]) == pytest.approx(0.0, abs=1e-12)
        assert m.log_density([0.25]) == pytest.approx(np.log(0.5), abs=1e-12)

    def test_zero_factor_sentinel(self):
        m = FlowModel((2,), [BernsteinTensor([0.0, 2.0])])
        assert m.log_density([0.0]) == -np.inf

    def test_batch_matches_point(self, rng):
        m = random_flow(rng, (3, 4))
        u = rng.uniform(0.05, 0.95, size=(20, 2))
        batch = m.log_density_batch(u)
        for row, v in zip(u, batch):
            assert v == pytest.approx(m.log_density(row), abs=1e-10)

    def test_unit_mass(self, rng):
        m = random_flow(rng, (4, 3))
        assert density_tensor_mass(m) == pytest.approx(1.0, abs=1e-9)


class TestLogDensityX:
    def test_uniform_affine(self):
        from bernflow.transform import DiagonalTransform
        m = FlowModel.uniform((2, 2))
        t = DiagonalTransform("affine", lo=[0.0, 0.0], hi=[2.0, 2.0])
        assert m.log_density_x(t, [0.7, 1.1]) == pytest.approx(-2 * np.log(2.0))

    def test_integrates_to_one_in_x(self, rng):
        from bernflow.transform import DiagonalTransform
        m = random_flow(rng, (4,))
        t = DiagonalTransform("gaussian_cdf", mean=[0.5], std=[1.3])
        total, _ = quad(lambda x: np.exp(m.log_density_x(t, [x])), -8, 9,
                        limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)


class TestToTensor:
    def test_uniform_all_ones(self):
        t = FlowModel.uniform((2, 3)).to_tensor()
        np.testing.assert_allclose(t.coeffs, np.ones(t.coeffs.shape), atol=1e-12)

    def test_single_factor_1d(self, rng):
        m = random_flow(rng, (5,))
        np.testing.assert_allclose(m.to_tensor().coeffs, m.factors[0].coeffs,
                                   atol=1e-12)

    def test_pointwise_product(self, rng):
        m = random_flow(rng, (3, 4))
        t = m.to_tensor()
        for u in rng.uniform(0.05, 0.95, size=(100, 2)):
            assert bernstein.eval_point(t, u) == pytest.approx(
                np.exp(m.log_density(u)), abs=1e-9)


class TestSample:
    def test_uniform_identity(self, rng):
        m = FlowModel.uniform((3, 3))
        state = rng.bit_generator.state
        s = m.sample(rng, 50)
        rng.bit_generator.state = state
        z = rng.random((50, 2))
        np.testing.assert_allclose(s, z, atol=1e-8)

    def test_linear_density_ks(self):
        m = FlowModel((2,), [BernsteinTensor([0.0, 2.0])])  # CDF u^2
        s = m.sample(np.random.default_rng(0), 100_000)[:, 0]
        stat = kstest(s, lambda u: u ** 2).statistic
        assert stat < 0.01

    def test_sample_mean_matches_first_moment(self, rng):
        m = random_flow(rng, (4,))
        s = m.sample(np.random.default_rng(1), 100_000)[:, 0]
        moment = bernstein.integrate_box(
            bernstein.multiply(BernsteinTensor([0.0, 1.0]), m.factors[0]),
            Box.unit(1))
        se = s.std() / np.sqrt(s.shape[0])
        assert abs(s.mean() - moment) < 3 * se

    def test_2d_sample_log_density_consistency(self, rng):
        # empirical mean of the density over samples should exceed the mean
        # over uniform points (importance concentration sanity check)
        m = random_flow(rng, (3, 3))
        s = m.sample(np.random.default_rng(2), 5000)
        u = rng.random((5000, 2))
        assert m.log_density_batch(s).mean() > m.log_density_batch(u).mean()


class TestConditional:
    def test_uniform_conditional_zero(self, rng):
        m = ConditionalFlowModel.uniform((2, 2), (3, 3))
        for _ in range(5):
            u, w = rng.random(2), rng.random(2)
            assert m.conditional_log_density(u, w) == pytest.approx(0.0, abs=1e-12)

    def test_w_independent_reduces_to_marginal(self, rng):
        flow = random_flow(rng, (3, 2))
        factors = []
        for i, f in enumerate(flow.factors):
            c = np.broadcast_to(f.coeffs[..., None, None],
                                f.coeffs.shape + (3, 3)).copy()
            factors.append(BernsteinTensor(c))
        cond = ConditionalFlowModel((3, 2), (2, 2), factors)
        for _ in range(10):
            u, w = rng.random(2), rng.random(2)
            assert cond.conditional_log_density(u, w) == pytest.approx(
                flow.log_density(u), abs=1e-10)

    def test_unit_mass_for_each_w(self, rng):
        m = random_conditional(rng, (3, 3), (2, 2))
        for _ in range(20):
            w = rng.random(2)
            restricted = m.at(w)
            assert density_tensor_mass(restricted) == pytest.approx(1.0, abs=1e-9)

    def test_conditional_tensor_pointwise(self, rng):
        m = random_conditional(rng, (2, 3), (2, 2))
        t = m.to_conditional_tensor()
        # u' axes first (summed factor degrees), then conditioning axes
        assert t.degree == (3, 2, 4, 4)
        for _ in range(20):
            u, w = rng.random(2), rng.random(2)
            assert bernstein.eval_point(t, np.concatenate([u, w])) == pytest.approx(
                np.exp(m.conditional_log_density(u, w)), abs=1e-9)

    def test_conditional_sample_ks(self):
        # single conditioning axis modulating a linear density
        c = np.array([[0.4, 1.6], [1.2, 0.8]]).T  # shape (2, 2): (u-axis, w-axis)
        m = ConditionalFlowModel((2,), (1,), [BernsteinTensor(c)])
        w = np.array([0.0])  # density 0.4 + 1.2 u at w=0... via basis collapse
        s = m.conditional_sample(w, np.random.default_rng(3), 50_000)[:, 0]
        flow = m.at(w)

        def cdf(u):
            g = bernstein.antiderivative_axis(flow.factors[0], 0)
            return np.array([bernstein.eval_point(g, [v]) for v in np.atleast_1d(u)])

        assert kstest(s, cdf).statistic < 0.01


class TestSerialization:
    def test_flow_round_trip(self, rng):
        m = random_flow(rng, (3, 4))
        m2 = FlowModel.from_json_record(m.to_json_record())
        u = rng.uniform(0.1, 0.9, size=(10, 2))
        np.testing.assert_array_equal(m.log_density_batch(u),
                                      m2.log_density_batch(u))

    def test_conditional_round_trip(self, rng):
        m = random_conditional(rng, (2, 2), (3, 3))
        m2 = ConditionalFlowModel.from_json_record(m.to_json_record())
        assert m2.cond_degree == m.cond_degree
        u, w = rng.random(2), rng.random(2)
        assert m2.conditional_log_density(u, w) == m.conditional_log_density(u, w)

    def test_certificate_raise_preserved(self):
        c = np.array([1.2, -0.3, 1.5])
        c = 3.0 * c / c.sum()
        m = FlowModel((3,), [BernsteinTensor(c)], certificate_raise=40)
        m2 = FlowModel.from_json_record(m.to_json_record())
        assert m2.certificate_raise == 40
