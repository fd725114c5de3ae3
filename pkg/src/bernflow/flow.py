"""Triangular polynomial flow densities over the unit box.

A flow model stores, per state dimension ``i``, the coefficient tensor of the
derivative polynomial of the i-th triangular map component.  The density is
the product of those factors; because each factor is non-negative and its
slices along the i-th axis sum to ``d_i`` (so every conditional derivative
integrates to one), the product is a valid density without any normalization
constant.
"""

from __future__ import annotations

import numpy as np

from . import _kernels, bernstein
from .bernstein import BernsteinTensor, Box, ContractError

SLICE_SUM_TOL = 1e-9
COEFF_NEG_TOL = 1e-12


class InvalidModelError(ValueError):
    pass


class FlowModel:
    """Density over (0,1)^n given by n triangular derivative polynomials.

    ``factors[i]`` is a tensor over ``u_1..u_{i+1}`` of degree
    ``(d_1, ..., d_i, d_{i+1} - 1)``.
    """

    def __init__(self, degree, factors: list[BernsteinTensor], validate: bool = True,
                 certificate_raise: int = 0):
        self.degree = tuple(int(d) for d in np.atleast_1d(degree))
        self.n = len(self.degree)
        self.factors = list(factors)
        self.certificate_raise = int(certificate_raise)
        if validate:
            self.validate()

    def validate(self):
        if len(self.factors) != self.n:
            raise InvalidModelError("need one factor per dimension")
        for i, f in enumerate(self.factors):
            expected = self.degree[:i] + (self.degree[i] - 1,)
            if f.degree != expected:
                raise InvalidModelError(
                    f"factor {i} degree {f.degree}, expected {expected}")
            _check_density_factor(f, axis=i, target=self.degree[i],
                                  label=f"factor {i}", raise_by=self.certificate_raise)

    @classmethod
    def uniform(cls, degree) -> "FlowModel":
        degree = tuple(int(d) for d in np.atleast_1d(degree))
        factors = [BernsteinTensor.constant(1.0, degree[:i] + (degree[i] - 1,))
                   for i in range(len(degree))]
        return cls(degree, factors)

    def log_density(self, u) -> float:
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        total = 0.0
        for i, f in enumerate(self.factors):
            v = bernstein.eval_point(f, u[:i + 1])
            if v <= 0.0:
                return -np.inf
            total += np.log(v)
        return total

    def log_density_batch(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if u.ndim == 1:
            u = u[:, None]
        total = np.zeros(u.shape[0])
        for i, f in enumerate(self.factors):
            v = bernstein.eval_batch(f, u[:, :i + 1])
            with np.errstate(divide="ignore", invalid="ignore"):
                total += np.where(v > 0.0, np.log(np.maximum(v, 1e-300)), -np.inf)
        return total

    def log_density_x(self, transform, x) -> float:
        u = transform.forward(np.atleast_1d(np.asarray(x, dtype=np.float64)))
        return self.log_density(u) + transform.log_det_jacobian(x)

    def log_density_x_batch(self, transform, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        u = transform.forward(x)
        return self.log_density_batch(u) + transform.log_det_jacobian_batch(x)

    def to_tensor(self) -> BernsteinTensor:
        """Expand the factored density into one Bernstein tensor over u."""
        out = bernstein.embed(self.factors[0], self.n, [0])
        for i in range(1, self.n):
            out = bernstein.multiply(out, bernstein.embed(self.factors[i], self.n,
                                                          list(range(i + 1))))
        return out

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw samples by inverting the triangular map on uniform latents.

        For each dimension in order, the conditional CDF given the already
        drawn coordinates is a monotone univariate Bernstein polynomial;
        it is inverted by bisection plus a Newton polish.
        """
        z = rng.random((count, self.n))
        out = np.empty((count, self.n))
        for i, f in enumerate(self.factors):
            rows = _restrict_rows(f, out[:, :i])
            out[:, i] = _invert_rows(rows, z[:, i], self.degree[i])
        return out

    def to_json_record(self) -> dict:
        return {
            "kind": "initial",
            "n": self.n,
            "degree": list(self.degree),
            "certificate_raise": self.certificate_raise,
            "factors": [bernstein.to_json_record(f) for f in self.factors],
        }

    @classmethod
    def from_json_record(cls, rec: dict) -> "FlowModel":
        factors = [bernstein.from_json_record(r) for r in rec["factors"]]
        return cls(rec["degree"], factors,
                   certificate_raise=rec.get("certificate_raise", 0))


class ConditionalFlowModel:
    """Conditional density over (0,1)^n given a conditioning point in (0,1)^m.

    ``factors[i]`` spans ``(u_1..u_{i+1}, w_1..w_m)`` with degree
    ``(d_1, ..., d_i, d_{i+1} - 1, c_1, ..., c_m)``.
    """

    def __init__(self, degree, cond_degree, factors: list[BernsteinTensor],
                 validate: bool = True, certificate_raise: int = 0):
        self.degree = tuple(int(d) for d in np.atleast_1d(degree))
        self.cond_degree = tuple(int(d) for d in np.atleast_1d(cond_degree))
        self.n = len(self.degree)
        self.m = len(self.cond_degree)
        self.factors = list(factors)
        self.certificate_raise = int(certificate_raise)
        if validate:
            self.validate()

    def validate(self):
        if len(self.factors) != self.n:
            raise InvalidModelError("need one factor per dimension")
        for i, f in enumerate(self.factors):
            expected = self.degree[:i] + (self.degree[i] - 1,) + self.cond_degree
            if f.degree != expected:
                raise InvalidModelError(
                    f"factor {i} degree {f.degree}, expected {expected}")
            _check_density_factor(f, axis=i, target=self.degree[i],
                                  label=f"factor {i}", raise_by=self.certificate_raise)

    @classmethod
    def uniform(cls, degree, cond_degree) -> "ConditionalFlowModel":
        degree = tuple(int(d) for d in np.atleast_1d(degree))
        cond_degree = tuple(int(d) for d in np.atleast_1d(cond_degree))
        factors = [
            BernsteinTensor.constant(1.0, degree[:i] + (degree[i] - 1,) + cond_degree)
            for i in range(len(degree))
        ]
        return cls(degree, cond_degree, factors)

    def conditional_log_density(self, u, w) -> float:
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        w = np.atleast_1d(np.asarray(w, dtype=np.float64))
        total = 0.0
        for i, f in enumerate(self.factors):
            v = bernstein.eval_point(f, np.concatenate([u[:i + 1], w]))
            if v <= 0.0:
                return -np.inf
            total += np.log(v)
        return total

    def conditional_log_density_batch(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        total = np.zeros(u.shape[0])
        for i, f in enumerate(self.factors):
            pts = np.concatenate([u[:, :i + 1], w], axis=1)
            v = bernstein.eval_batch(f, pts)
            with np.errstate(divide="ignore", invalid="ignore"):
                total += np.where(v > 0.0, np.log(np.maximum(v, 1e-300)), -np.inf)
        return total

    def at(self, w) -> FlowModel:
        """Restrict the conditioning axes at w, yielding an unconditional flow."""
        w = np.atleast_1d(np.asarray(w, dtype=np.float64))
        factors = []
        for i, f in enumerate(self.factors):
            w_axes = list(range(i + 1, i + 1 + self.m))
            factors.append(bernstein.restrict(f, w_axes, w))
        return FlowModel(self.degree, factors, validate=False)

    def to_conditional_tensor(self) -> BernsteinTensor:
        """Joint tensor over (u axes first, then conditioning axes)."""
        total_axes = self.n + self.m
        out = None
        for i, f in enumerate(self.factors):
            axes = list(range(i + 1)) + list(range(self.n, total_axes))
            emb = bernstein.embed(f, total_axes, axes)
            out = emb if out is None else bernstein.multiply(out, emb)
        return out

    def conditional_sample(self, w, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.at(w).sample(rng, count)

    def to_json_record(self) -> dict:
        return {
            "kind": "transition",
            "n": self.n,
            "m": self.m,
            "degree": list(self.degree),
            "cond_degree": list(self.cond_degree),
            "certificate_raise": self.certificate_raise,
            "factors": [bernstein.to_json_record(f) for f in self.factors],
        }

    @classmethod
    def from_json_record(cls, rec: dict) -> "ConditionalFlowModel":
        factors = [bernstein.from_json_record(r) for r in rec["factors"]]
        return cls(rec["degree"], rec["cond_degree"], factors,
                   certificate_raise=rec.get("certificate_raise", 0))


def _check_density_factor(f: BernsteinTensor, axis: int, target: int, label: str,
                          raise_by: int = 0):
    cmin = float(f.coeffs.min())
    if cmin < -COEFF_NEG_TOL:
        if raise_by <= 0:
            raise InvalidModelError(f"{label}: negative coefficient {cmin:.3e}")
        # relaxation-tightened models: positivity is certified at raised degree
        raised = bernstein.degree_raise(
            f, tuple(d + raise_by for d in f.degree)).coeffs
        if float(raised.min()) < -1e-9:
            raise InvalidModelError(
                f"{label}: raised coefficient minimum {raised.min():.3e}")
    sums = f.coeffs.sum(axis=axis)
    if np.max(np.abs(sums - target)) > SLICE_SUM_TOL * max(1.0, target):
        raise InvalidModelError(
            f"{label}: slice sums deviate from {target} by "
            f"{np.max(np.abs(sums - target)):.3e}")


def _restrict_rows(factor: BernsteinTensor, prefix: np.ndarray) -> np.ndarray:
    """Per-sample univariate coefficients of a factor with its leading axes fixed.

    ``prefix`` has shape (N, i); the result has shape (N, d_i) where d_i is
    the factor size along its last axis.
    """
    count = prefix.shape[0]
    c = factor.coeffs
    if prefix.shape[1] == 0:
        return np.broadcast_to(c, (count, c.shape[-1]))
    bases = [_kernels.basis_matrix(prefix[:, a], c.shape[a] - 1)
             for a in range(prefix.shape[1])]
    rows = np.tensordot(bases[0], c, axes=([1], [0]))
    for b in bases[1:]:
        rows = np.einsum("nj,njk->nk", b, rows.reshape(count, b.shape[1], -1)) \
            .reshape((count,) + rows.shape[2:])
    return rows


def _invert_rows(deriv_rows: np.ndarray, z: np.ndarray, d: int) -> np.ndarray:
    # cumulative-coefficient antiderivative per row; G(0)=0, G(1)=1 for valid rows
    g_rows = np.concatenate(
        [np.zeros((deriv_rows.shape[0], 1)), np.cumsum(deriv_rows, axis=1) / d],
        axis=1)
    ends = g_rows[:, -1]
    if np.any(ends <= 0.0):
        raise InvalidModelError("flow inversion bracket failure: invariant violation")
    if deriv_rows.shape[0] > 0 and np.allclose(deriv_rows, deriv_rows[0][None, :]):
        return _kernels.solve_monotone_batch(g_rows[0], deriv_rows[0], z)
    return _kernels.solve_monotone_rows(g_rows, deriv_rows, z)


def density_tensor_mass(model: FlowModel) -> float:
    t = model.to_tensor()
    return bernstein.integrate_box(t, Box.unit(model.n))
