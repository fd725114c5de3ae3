import numpy as np
import pytest

from bernflow import bernstein, training
from bernflow.bernstein import BernsteinTensor, Box
from bernflow.flow import FlowModel, density_tensor_mass
from bernflow.training import (TrainConfig, TrainingError, constrain,
                               degree_raise_penalty, feasibility_projection,
                               fit_initial, fit_transition, nll_and_gradient,
                               train_relaxed)
from bernflow.transform import DiagonalTransform


def unit_transform(n):
    return DiagonalTransform("affine", lo=[0.0] * n, hi=[1.0] * n)


def fd_gradient(fn, thetas, h=1e-5):
    grads = []
    for t in thetas:
        g = np.zeros_like(t)
        for idx in np.ndindex(t.shape):
            t[idx] += h
            fp = fn(thetas)
            t[idx] -= 2 * h
            fm = fn(thetas)
            t[idx] += h
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


class TestConstrain:
    def test_symmetric_theta(self):
        out = constrain([np.zeros(3)], (3,))
        np.testing.assert_allclose(out[0], np.ones(3), atol=1e-12)

    def test_softplus_hand_case(self):
        # softplus(0) = log 2 per entry, slices rescaled to sum d = 2
        out = constrain([np.zeros(2)], (2,))
        np.testing.assert_allclose(out[0], [1.0, 1.0], atol=1e-7)

    def test_output_always_feasible(self, rng):
        degree = (3, 4)
        thetas = [rng.standard_normal((3,)), rng.standard_normal((4, 4))]
        coeffs = constrain(thetas, degree)
        FlowModel(degree, [BernsteinTensor(c) for c in coeffs])

    def test_relaxed_keeps_sign(self, rng):
        theta = np.array([1.0, -0.5, 2.5])
        out = constrain([theta], (3,), positive=False)
        assert out[0][1] < 0
        assert out[0].sum() == pytest.approx(3.0)


class TestNllGradient:
    def test_uniform_stationary_in_scale_direction(self, rng):
        # NLL is exactly zero at the uniform model; the gradient component
        # along the normalization (uniform scaling) direction vanishes
        thetas = [np.zeros(3), np.zeros((4, 2))]
        u = rng.uniform(0.1, 0.9, size=(32, 2))
        nll, grads = nll_and_gradient(thetas, (3, 2), u)
        assert nll == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(grads[0].sum(), 0.0, atol=1e-9)
        np.testing.assert_allclose(grads[1].sum(axis=1), 0.0, atol=1e-9)

    def test_single_point_definition(self):
        thetas = [np.array([0.3, -0.2])]
        u = np.array([[0.5]])
        nll, _ = nll_and_gradient(thetas, (2,), u)
        b = constrain(thetas, (2,))[0]
        assert nll == pytest.approx(
            -np.log(bernstein.eval_point(BernsteinTensor(b), [0.5])))

    @pytest.mark.parametrize("positive", [True, False])
    def test_gradient_matches_fd(self, rng, positive):
        degree = (3, 2)
        thetas = [rng.standard_normal(3) * 0.5 + (0 if positive else 1.5),
                  rng.standard_normal((4, 2)) * 0.5 + (0 if positive else 1.5)]
        u = rng.uniform(0.1, 0.9, size=(16, 2))
        _, grads = nll_and_gradient(thetas, degree, u, positive=positive)
        fd = fd_gradient(
            lambda th: nll_and_gradient(th, degree, u, positive=positive)[0], thetas)
        for g, f in zip(grads, fd):
            np.testing.assert_allclose(g, f, rtol=1e-5, atol=1e-8)

    def test_conditional_gradient_matches_fd(self, rng):
        degree = (2, 2)
        shapes = [(2, 3, 3), (3, 2, 3, 3)]
        thetas = [0.4 * rng.standard_normal(s) for s in shapes]
        u = rng.uniform(0.1, 0.9, size=(12, 2))
        w = rng.uniform(0.1, 0.9, size=(12, 2))
        _, grads = nll_and_gradient(thetas, degree, u, w)
        fd = fd_gradient(lambda th: nll_and_gradient(th, degree, u, w)[0], thetas)
        for g, f in zip(grads, fd):
            np.testing.assert_allclose(g, f, rtol=1e-5, atol=1e-8)


class TestPenalty:
    def test_all_positive_zero(self, rng):
        thetas = [np.abs(rng.standard_normal(4)) + 0.5]
        pen, grads = degree_raise_penalty(thetas, (4,), 4)
        assert pen == 0.0
        np.testing.assert_allclose(grads[0], 0.0)

    def test_raising_shrinks_penalty(self):
        # positive polynomial, one negative coefficient: raising certifies it
        theta = np.array([0.2, -0.05, 0.3])
        pen0, _ = degree_raise_penalty([theta.copy()], (3,), 0)
        pen4, _ = degree_raise_penalty([theta.copy()], (3,), 4)
        assert pen4 < pen0
        assert pen4 == 0.0

    def test_gradient_matches_fd(self, rng):
        # keep away from hinge kinks: all raised coefficients clearly signed
        theta = np.array([0.5, -0.4, 0.8, 0.6])
        pen, grads = degree_raise_penalty([theta.copy()], (4,), 2)
        assert pen > 0
        fd = fd_gradient(
            lambda th: degree_raise_penalty(th, (4,), 2)[0], [theta.copy()])
        np.testing.assert_allclose(grads[0], fd[0], rtol=1e-5, atol=1e-8)


class TestProjection:
    def test_feasible_fixed_point(self, rng):
        c = np.abs(rng.standard_normal(4)) + 0.2
        c = 4.0 * c / c.sum()
        out = feasibility_projection([c.copy()], (4,), 4)
        np.testing.assert_allclose(out[0], c, atol=1e-12)

    def test_spec_polynomial(self):
        c = np.array([0.2, -0.05, 0.3])
        out = feasibility_projection([3.0 * c / c.sum()], (3,), 4)
        # feasible at the raised degree and close to the (normalized) input
        raised = bernstein.degree_raise(BernsteinTensor(out[0]), (6,))
        assert raised.coeffs.min() >= -1e-12
        assert out[0].sum() == pytest.approx(3.0, abs=1e-10)
        assert np.max(np.abs(out[0] - 3.0 * c / c.sum())) < 0.1

    def test_output_passes_flow_invariants(self, rng):
        c = rng.standard_normal(5) + 0.8
        c = 5.0 * c / c.sum()
        out = feasibility_projection([c], (5,), 10)
        FlowModel((5,), [BernsteinTensor(out[0])], certificate_raise=10)

    def test_unstable_case_still_returns_feasible(self):
        # With max_iter=1 the least-squares cycle cannot finish; the uniform
        # blend must still deliver a feasible, slice-normalized result.
        out = feasibility_projection([np.array([2.0, -3.0, 4.0])], (3,), 2,
                                     max_iter=1)
        raised = bernstein.degree_raise(BernsteinTensor(out[0]), (4,))
        assert raised.coeffs.min() >= -1e-12
        assert out[0].sum() == pytest.approx(3.0, abs=1e-10)


def _beta22_samples(rng, count):
    # density 6u(1-u): exactly representable at degree >= 2
    return rng.beta(2.0, 2.0, size=(count, 1))


class TestFitInitial:
    def test_recovers_uniform(self, rng):
        data = rng.random((10_000, 1))
        cfg = TrainConfig(epochs=40, batch_size=256, learning_rate=0.05, seed=4)
        model, history = fit_initial(data, unit_transform(1), (5,), cfg)
        grid = np.linspace(0.01, 0.99, 200)[:, None]
        dens = np.exp(model.log_density_batch(grid))
        tv = 0.5 * np.mean(np.abs(dens - 1.0))
        assert tv < 0.05
        assert len(history) == 40

    def test_beta_like_nll_near_entropy(self, rng):
        data = _beta22_samples(rng, 20_000)
        cfg = TrainConfig(epochs=60, batch_size=512, learning_rate=0.05, seed=5)
        model, history = fit_initial(data, unit_transform(1), (5,), cfg)
        # Monte Carlo estimate of the Beta(2,2) differential entropy
        u = rng.beta(2.0, 2.0, size=(50_000, 1))
        mc_entropy = -np.mean(np.log(6.0 * u * (1 - u)))
        assert history[-1]["nll"] < mc_entropy + 0.02

    def test_training_nll_decreases(self, rng):
        data = _beta22_samples(rng, 5000)
        cfg = TrainConfig(epochs=30, batch_size=256, learning_rate=0.05, seed=6)
        _, history = fit_initial(data, unit_transform(1), (4,), cfg)
        assert history[-1]["nll"] < history[0]["nll"]

    def test_higher_degree_no_worse(self, rng):
        data = _beta22_samples(rng, 4000)
        finals = []
        for d in (3, 6):
            cfg = TrainConfig(epochs=50, batch_size=256, learning_rate=0.05, seed=7)
            _, history = fit_initial(data, unit_transform(1), (d,), cfg)
            finals.append(history[-1]["nll"])
        assert finals[1] <= finals[0] + 0.02


class TestFitTransition:
    def test_identity_dynamics_concentrates(self, rng):
        x = rng.uniform(0.15, 0.85, size=(6000, 1))
        xp = np.clip(x + 0.05 * rng.standard_normal(x.shape), 0.01, 0.99)
        cfg = TrainConfig(epochs=200, batch_size=512, learning_rate=0.1, seed=8)
        model, _ = fit_transition(x, xp, unit_transform(1), (12,), cfg)
        errs = []
        for w in np.linspace(0.25, 0.75, 9):
            flow = model.at([w])
            mean = bernstein.integrate_box(
                bernstein.multiply(BernsteinTensor([0.0, 1.0]), flow.factors[0]),
                Box.unit(1))
            errs.append(abs(mean - w))
        assert np.mean(errs) < 0.05

    def test_w_independent_data(self, rng):
        x = rng.random((6000, 1))
        xp = rng.beta(2.0, 2.0, size=(6000, 1))  # next state ignores current
        cfg = TrainConfig(epochs=40, batch_size=512, learning_rate=0.05, seed=9)
        model, _ = fit_transition(x, xp, unit_transform(1), (4,), cfg)
        u = rng.uniform(0.2, 0.8, size=10)
        spread = [np.std([model.conditional_log_density([ui], [w])
                          for w in np.linspace(0.2, 0.8, 7)]) for ui in u]
        assert np.mean(spread) < 0.12


class TestTrainRelaxed:
    def test_final_model_feasible(self, rng):
        data = _beta22_samples(rng, 3000)
        cfg = TrainConfig(epochs=30, batch_size=256, learning_rate=0.05,
                          degree_raise=6, penalty_weight=10.0, seed=10)
        model, history = train_relaxed(data, unit_transform(1), (5,), cfg)
        model.validate()
        assert model.certificate_raise == 6
        assert density_tensor_mass(model) == pytest.approx(1.0, abs=1e-9)

    def test_relaxed_matches_or_beats_hard_fit(self, rng):
        # 1-D target whose best Bernstein fit wants a negative coefficient:
        # sharply bimodal density near the boundary
        data = np.concatenate([rng.beta(0.5, 3.0, size=(2500, 1)),
                               rng.beta(3.0, 0.5, size=(2500, 1))])
        hard_cfg = TrainConfig(epochs=80, batch_size=256, learning_rate=0.05,
                               seed=11)
        _, hard_hist = fit_initial(data, unit_transform(1), (6,), hard_cfg)
        rel_cfg = TrainConfig(epochs=80, batch_size=256, learning_rate=0.05,
                              degree_raise=8, penalty_weight=10.0, seed=11)
        _, rel_hist = train_relaxed(data, unit_transform(1), (6,), rel_cfg)
        assert rel_hist[-1]["nll"] <= hard_hist[-1]["nll"] + 1e-6

    def test_conditional_relaxed(self, rng):
        x = rng.random((3000, 1))
        xp = np.clip(0.5 + 0.3 * (x - 0.5) + 0.05 * rng.standard_normal(x.shape),
                     0.01, 0.99)
        cfg = TrainConfig(epochs=25, batch_size=256, learning_rate=0.05,
                          degree_raise=4, penalty_weight=10.0, seed=12)
        model, _ = train_relaxed((x, xp), unit_transform(1), (4,), cfg,
                                 conditional=True)
        model.validate()


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(degree_raise=-1)

    def test_unknown_optimizer(self, rng):
        data = rng.random((100, 1))
        cfg = TrainConfig(epochs=1, optimizer="sgd")
        with pytest.raises(TrainingError):
            fit_initial(data, unit_transform(1), (3,), cfg)
