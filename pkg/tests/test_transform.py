import numpy as np
import pytest

from bernflow.transform import DiagonalTransform, TransformError, moment_match


@pytest.fixture
def gauss():
    return DiagonalTransform("gaussian_cdf", mean=[0.0, 1.0], std=[1.0, 2.0])


@pytest.fixture
def affine():
    return DiagonalTransform("affine", lo=[0.0, 0.0], hi=[2.0, 4.0])


class TestForward:
    def test_gaussian_median(self):
        t = DiagonalTransform("gaussian_cdf", mean=[0.0], std=[1.0])
        assert t.forward(np.array([0.0]))[0] == pytest.approx(0.5)

    def test_affine_midpoint(self):
        t = DiagonalTransform("affine", lo=[0.0], hi=[2.0])
        assert t.forward(np.array([1.0]))[0] == pytest.approx(0.5)

    def test_gaussian_975(self):
        t = DiagonalTransform("gaussian_cdf", mean=[0.0], std=[1.0])
        assert t.forward(np.array([1.959964]))[0] == pytest.approx(0.975, abs=1e-5)

    def test_clamp_counted(self):
        t = DiagonalTransform("gaussian_cdf", mean=[0.0], std=[1.0])
        before = t.clamp_count
        u = t.forward(np.array([50.0]))
        assert u[0] == pytest.approx(1.0 - 1e-12)
        assert t.clamp_count == before + 1

    def test_non_finite_rejected(self, gauss):
        with pytest.raises(TransformError):
            gauss.forward(np.array([np.inf, 0.0]))


class TestInverse:
    def test_round_trip(self, gauss, rng):
        u = rng.uniform(0.01, 0.99, size=(100, 2))
        np.testing.assert_allclose(gauss.forward(gauss.inverse(u)), u, atol=1e-9)

    def test_median_maps_to_mean(self, gauss):
        np.testing.assert_allclose(gauss.inverse(np.array([0.5, 0.5])),
                                   [0.0, 1.0], atol=1e-12)

    def test_affine_quarter(self):
        t = DiagonalTransform("affine", lo=[0.0], hi=[4.0])
        assert t.inverse(np.array([0.25]))[0] == pytest.approx(1.0)

    def test_boundary_rejected(self, gauss):
        with pytest.raises(TransformError):
            gauss.inverse(np.array([0.0, 0.5]))


class TestLogDetJacobian:
    def test_affine_constant(self, affine):
        expected = -np.log(2.0) - np.log(4.0)
        assert affine.log_det_jacobian(np.array([0.3, 1.0])) == pytest.approx(expected)

    def test_standard_normal_at_zero(self):
        t = DiagonalTransform("gaussian_cdf", mean=[0.0], std=[1.0])
        assert t.log_det_jacobian(np.array([0.0])) == pytest.approx(
            -0.5 * np.log(2 * np.pi))

    def test_matches_finite_difference(self, gauss, rng):
        h = 1e-6
        for x in rng.uniform(-2, 2, size=(10, 2)):
            total = 0.0
            for i in range(2):
                xp, xm = x.copy(), x.copy()
                xp[i] += h
                xm[i] -= h
                du = (gauss.forward(xp)[i] - gauss.forward(xm)[i]) / (2 * h)
                total += np.log(du)
            assert gauss.log_det_jacobian(x) == pytest.approx(total, abs=1e-5)

    def test_batch_matches_scalar(self, gauss, rng):
        x = rng.uniform(-2, 3, size=(20, 2))
        batch = gauss.log_det_jacobian_batch(x)
        for row, v in zip(x, batch):
            assert v == pytest.approx(gauss.log_det_jacobian(row), abs=1e-12)

    def test_underflow_sentinel(self):
        t = DiagonalTransform("gaussian_cdf", mean=[0.0], std=[1.0])
        assert t.log_det_jacobian(np.array([1e200])) == -np.inf


class TestMapBox:
    def test_infinite_box_is_unit(self, gauss):
        lo, hi = gauss.map_box(np.array([-np.inf, -np.inf]),
                               np.array([np.inf, np.inf]))
        np.testing.assert_array_equal(lo, [0.0, 0.0])
        np.testing.assert_array_equal(hi, [1.0, 1.0])

    def test_half_infinite(self):
        t = DiagonalTransform("gaussian_cdf", mean=[0.0], std=[1.0])
        lo, hi = t.map_box(np.array([0.0]), np.array([np.inf]))
        assert lo[0] == pytest.approx(0.5)
        assert hi[0] == 1.0


class TestMomentMatch:
    def test_two_points(self):
        t = moment_match(np.array([[-1.0], [1.0]]), 0.0)
        assert t.mean[0] == pytest.approx(0.0)
        assert t.std[0] == pytest.approx(np.sqrt(2.0))  # unbiased variance

    def test_buffer_added(self, rng):
        data = rng.standard_normal((500, 2))
        t0 = moment_match(data, 0.0)
        t = moment_match(data, 2.2)
        np.testing.assert_allclose(t.std ** 2, t0.std ** 2 + 2.2, atol=1e-10)

    def test_symmetric_data_centers(self, rng):
        data = np.concatenate([rng.standard_normal((100, 1))] * 1)
        data = np.vstack([data, -data])
        t = moment_match(data, 0.0)
        assert t.forward(np.array([0.0]))[0] == pytest.approx(0.5, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(TransformError):
            moment_match(np.array([[1.0]]))

    def test_zero_variance(self):
        with pytest.raises(TransformError):
            moment_match(np.array([[1.0, 0.0], [1.0, 1.0]]))


def test_json_round_trip(gauss, affine, rng):
    for t in (gauss, affine):
        t2 = DiagonalTransform.from_json_record(t.to_json_record())
        x = rng.uniform(0.1, 1.9, size=(5, 2))
        np.testing.assert_array_equal(t.forward(x), t2.forward(x))
