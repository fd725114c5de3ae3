import numpy as np
import pytest

from bernflow.bernstein import BernsteinTensor


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_tensor(rng, degree, positive=False, lo=-1.0, hi=1.0):
    shape = tuple(d + 1 for d in degree)
    c = rng.uniform(lo, hi, size=shape)
    if positive:
        c = np.abs(c) + 0.05
    return BernsteinTensor(c)


def random_density_factor(rng, axis, degree):
    """Random feasible flow factor: positive with axis slices summing to d."""
    shape = tuple(d + 1 for d in degree[:axis]) + (degree[axis],)
    c = rng.uniform(0.1, 1.0, size=shape)
    c = degree[axis] * c / c.sum(axis=axis, keepdims=True)
    return BernsteinTensor(c)


def random_flow(rng, degree):
    from bernflow.flow import FlowModel
    factors = [random_density_factor(rng, i, degree) for i in range(len(degree))]
    return FlowModel(degree, factors)


def random_conditional(rng, degree, cond_degree):
    from bernflow.flow import ConditionalFlowModel
    factors = []
    for i in range(len(degree)):
        shape = tuple(d + 1 for d in degree[:i]) + (degree[i],) \
            + tuple(c + 1 for c in cond_degree)
        c = rng.uniform(0.1, 1.0, size=shape)
        c = degree[i] * c / c.sum(axis=i, keepdims=True)
        factors.append(BernsteinTensor(c))
    return ConditionalFlowModel(degree, cond_degree, factors)


def sympy_poly(tensor):
    """Exact symbolic polynomial of a Bernstein tensor (monomial expansion)."""
    import sympy as sp
    xs = sp.symbols(f"x0:{tensor.ndim}")
    expr = sp.Integer(0)
    d = tensor.degree
    for idx in np.ndindex(tensor.coeffs.shape):
        term = sp.Rational(1)
        for i, (j, di) in enumerate(zip(idx, d)):
            term *= sp.binomial(di, j) * xs[i] ** j * (1 - xs[i]) ** (di - j)
        expr += sp.Rational(float(tensor.coeffs[idx])) * term
    return sp.expand(expr), xs
