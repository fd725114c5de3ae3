"""Multivariate Bernstein polynomial tensors and their algebra.

A polynomial of per-axis degree ``d`` over the unit box is stored as a dense
coefficient tensor of shape ``(d_1 + 1, ..., d_n + 1)``.  All operations stay
in the Bernstein basis: evaluation uses per-axis de Casteljau reduction,
integration uses the cumulative-coefficient antiderivative rule, and products
combine scaled coefficients so that no monomial conversion ever happens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels


class ContractError(ValueError):
    """An operation was called outside its contract (bad index, shape, degree)."""


def log_binomial(d: int, j) -> np.ndarray:
    """log C(d, j), elementwise over j, computed via log-gamma."""
    j = np.asarray(j, dtype=np.float64)
    return gammaln(d + 1.0) - gammaln(j + 1.0) - gammaln(d - j + 1.0)


def binomial_row(d: int) -> np.ndarray:
    """All binomials C(d, 0..d) by the Pascal-triangle recurrence in float64."""
    row = np.ones(d + 1)
    for j in range(1, d + 1):
        row[j] = row[j - 1] * (d - j + 1) / j
    return row


@dataclass(frozen=True)
class BernsteinTensor:
    """Dense coefficient tensor of a multivariate Bernstein polynomial."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        if c.ndim < 1:
            c = c.reshape(1)
        if not np.all(np.isfinite(c)):
            raise ContractError("coefficients must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim

    @property
    def degree(self) -> tuple[int, ...]:
        return tuple(s - 1 for s in self.coeffs.shape)

    @classmethod
    def constant(cls, value: float, degree: tuple[int, ...]) -> "BernsteinTensor":
        return cls(np.full([d + 1 for d in degree], float(value)))


class Box:
    """Axis-aligned sub-box of the unit box."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ContractError("lo/hi must be matching 1-D vectors")
        if np.any(self.lo < -1e-12) or np.any(self.hi > 1 + 1e-12) or np.any(self.lo > self.hi):
            raise ContractError("box must satisfy 0 <= lo <= hi <= 1")

    @classmethod
    def unit(cls, n: int) -> "Box":
        return cls(np.zeros(n), np.ones(n))


def basis_eval(j, d, u) -> float:
    """Value of the multivariate basis function phi_j^d at u."""
    j = np.atleast_1d(np.asarray(j, dtype=np.int64))
    d = np.atleast_1d(np.asarray(d, dtype=np.int64))
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if j.shape != d.shape or j.shape != u.shape:
        raise ContractError("j, d, u must have the same length")
    if np.any(j < 0) or np.any(j > d):
        raise ContractError("multi-index out of range")
    out = 1.0
    for ji, di, ui in zip(j, d, u):
        row = _kernels.basis_matrix(np.array([ui]), int(di))[0]
        out *= row[ji]
    return float(out)


def eval_point(p: BernsteinTensor, u) -> float:
    """Evaluate p at a single point by per-axis de Casteljau reduction."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if u.shape[0] != p.ndim:
        raise ContractError("point dimension mismatch")
    c = p.coeffs
    for i in range(p.ndim - 1, -1, -1):
        ui = u[i]
        for _ in range(c.shape[i] - 1):
            c = (1.0 - ui) * np.take(c, range(c.shape[i] - 1), axis=i) \
                + ui * np.take(c, range(1, c.shape[i]), axis=i)
        c = np.squeeze(c, axis=i)
    return float(c)


def eval_batch(p: BernsteinTensor, u: np.ndarray) -> np.ndarray:
    """Evaluate p at many points; u has shape (N, n)."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[1] != p.ndim:
        raise ContractError("point dimension mismatch")
    bases = [_kernels.basis_matrix(u[:, i], p.degree[i]) for i in range(p.ndim)]
    return contract_batch(p.coeffs, bases)


def contract_batch(coeffs: np.ndarray, bases: list[np.ndarray]) -> np.ndarray:
    """Contract a coefficient tensor against per-axis basis matrices.

    Axes are split into two groups and the contraction is run as one matrix
    product so large tensors go through BLAS instead of generic einsum.
    """
    ndim = coeffs.ndim
    if ndim == 1:
        return bases[0] @ coeffs
    split = _balanced_split(coeffs.shape)
    left = khatri_rao(bases[:split])
    right = khatri_rao(bases[split:])
    mat = coeffs.reshape(left.shape[1], right.shape[1])
    return np.einsum("nj,nj->n", left @ mat, right)


def outer_accumulate(weights: np.ndarray, bases: list[np.ndarray], shape) -> np.ndarray:
    """Sum of weighted outer products of per-axis basis rows.

    Returns ``sum_n w_n * B_1[n] x ... x B_k[n]`` reshaped to ``shape``; this
    is the adjoint of :func:`contract_batch` and the core of every analytic
    gradient in the training module.
    """
    if len(bases) == 1:
        return (bases[0] * weights[:, None]).sum(axis=0).reshape(shape)
    split = _balanced_split(shape)
    left = khatri_rao(bases[:split])
    right = khatri_rao(bases[split:])
    return (left.T @ (right * weights[:, None])).reshape(shape)


def khatri_rao(bases: list[np.ndarray]) -> np.ndarray:
    out = bases[0]
    for b in bases[1:]:
        out = np.einsum("ni,nj->nij", out, b).reshape(out.shape[0], -1)
    return out


def _balanced_split(shape) -> int:
    total = int(np.prod(shape))
    best, best_cost = 1, float("inf")
    for split in range(1, len(shape)):
        l = int(np.prod(shape[:split]))
        cost = max(l, total // l)
        if cost < best_cost:
            best, best_cost = split, cost
    return best


def partial_derivative(p: BernsteinTensor, axis: int) -> BernsteinTensor:
    d = p.degree[axis]
    if d < 1:
        raise ContractError(f"cannot differentiate along axis {axis}: degree 0")
    c = p.coeffs
    diff = np.take(c, range(1, d + 1), axis=axis) - np.take(c, range(d), axis=axis)
    return BernsteinTensor(d * diff)


def antiderivative_axis(p: BernsteinTensor, axis: int) -> BernsteinTensor:
    """Antiderivative along one axis, vanishing at u_axis = 0.

    Coefficient k of the result is the partial sum of the first k input
    coefficients divided by the new degree.
    """
    d = p.degree[axis]
    csum = np.cumsum(p.coeffs, axis=axis) / (d + 1)
    pad = [(0, 0)] * p.ndim
    pad[axis] = (1, 0)
    return BernsteinTensor(np.pad(csum, pad))


def marginalize_axis(p: BernsteinTensor, axis: int) -> BernsteinTensor:
    """Integrate out one axis over [0, 1]: each basis slice contributes 1/(d+1)."""
    d = p.degree[axis]
    return BernsteinTensor(p.coeffs.sum(axis=axis) / (d + 1))


def integrate_box(p: BernsteinTensor, box: Box) -> float:
    """Exact integral of p over a sub-box of the unit box."""
    if box.lo.shape[0] != p.ndim:
        raise ContractError("box dimension mismatch")
    c = p.coeffs
    for i in range(p.ndim - 1, -1, -1):
        anti = antiderivative_axis(BernsteinTensor(c), i)
        hi = _eval_axis(anti.coeffs, i, box.hi[i])
        lo = _eval_axis(anti.coeffs, i, box.lo[i])
        c = hi - lo
    return float(c)


def _eval_axis(coeffs: np.ndarray, axis: int, u: float) -> np.ndarray:
    """De Casteljau reduction of one axis at a fixed value; drops the axis."""
    c = coeffs
    for _ in range(c.shape[axis] - 1):
        c = (1.0 - u) * np.take(c, range(c.shape[axis] - 1), axis=axis) \
            + u * np.take(c, range(1, c.shape[axis]), axis=axis)
    return np.squeeze(c, axis=axis)


def restrict(p: BernsteinTensor, axes: list[int], values) -> BernsteinTensor:
    """Fix the given axes at the given values (exact slice polynomial)."""
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    c = p.coeffs
    for axis, v in sorted(zip(axes, values), reverse=True):
        c = _eval_axis(c, axis, v)
    if c.ndim == 0:
        c = c.reshape(1)
    return BernsteinTensor(c)


def multiply(p: BernsteinTensor, q: BernsteinTensor) -> BernsteinTensor:
    """Product polynomial, computed entirely in the Bernstein basis.

    Per axis, phi_j^a * phi_l^b = [C(a,j) C(b,l) / C(a+b, j+l)] phi_{j+l}^{a+b},
    so the product coefficients are a convolution of binomially scaled
    coefficients, unscaled by the product-degree binomials.
    """
    if p.ndim != q.ndim:
        raise ContractError("dimension mismatch in multiply")
    sp = _scale(p.coeffs, +1)
    sq = _scale(q.coeffs, +1)
    conv = _convolve_dense(sp, sq)
    return BernsteinTensor(_scale(conv, -1))


def _scale(coeffs: np.ndarray, sign: int) -> np.ndarray:
    out = coeffs
    for i, s in enumerate(coeffs.shape):
        row = binomial_row(s - 1)
        shape = [1] * coeffs.ndim
        shape[i] = s
        out = out * row.reshape(shape) if sign > 0 else out / row.reshape(shape)
    return out


def _convolve_dense(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # direct (non-FFT) full convolution: all inputs here are scaled density
    # coefficients, so summation is cancellation-free
    if a.size < b.size:
        a, b = b, a
    out_shape = tuple(sa + sb - 1 for sa, sb in zip(a.shape, b.shape))
    out = np.zeros(out_shape)
    for idx in np.ndindex(b.shape):
        sl = tuple(slice(i, i + s) for i, s in zip(idx, a.shape))
        out[sl] += b[idx] * a
    return out


def convolve_axis(a: np.ndarray, b: np.ndarray, axis: int) -> np.ndarray:
    """Full convolution along one axis with broadcasting on the rest."""
    la, lb = a.shape[axis], b.shape[axis]
    if la < lb:
        a, b = b, a
        la, lb = lb, la
    out_shape = list(np.broadcast_shapes(
        a.shape[:axis] + (1,) + a.shape[axis + 1:],
        b.shape[:axis] + (1,) + b.shape[axis + 1:]))
    out_shape[axis] = la + lb - 1
    out = np.zeros(out_shape)
    for j in range(lb):
        sl_out = [slice(None)] * len(out_shape)
        sl_out[axis] = slice(j, j + la)
        sl_b = [slice(None)] * b.ndim
        sl_b[axis] = slice(j, j + 1)
        out[tuple(sl_out)] += a * b[tuple(sl_b)]
    return out


def embed(p: BernsteinTensor, n: int, axes: list[int]) -> BernsteinTensor:
    """Embed p into an n-dimensional tensor, degree 0 along the missing axes."""
    if len(axes) != p.ndim:
        raise ContractError("axes must list one target axis per input axis")
    shape = [1] * n
    order = np.argsort(axes)
    c = np.transpose(p.coeffs, order)
    for a, s in zip(sorted(axes), c.shape):
        shape[a] = s
    return BernsteinTensor(c.reshape(shape))


def raise_matrix(d: int, d_plus: int) -> np.ndarray:
    """Degree-raising matrix M with b_plus = M @ b, shape (d_plus+1, d+1).

    Closed form of repeated single-step raising:
    M[k, j] = C(d, j) C(d_plus - d, k - j) / C(d_plus, k).
    """
    if d_plus < d:
        raise ContractError("target degree below current degree")
    k = np.arange(d_plus + 1)[:, None]
    j = np.arange(d + 1)[None, :]
    kj = k - j
    valid = (kj >= 0) & (kj <= d_plus - d)
    logm = np.where(
        valid,
        log_binomial(d, j) + log_binomial(d_plus - d, np.where(valid, kj, 0))
        - log_binomial(d_plus, k),
        -np.inf,
    )
    return np.exp(logm)


def degree_raise(p: BernsteinTensor, target) -> BernsteinTensor:
    """Re-represent p at a higher degree; the polynomial is unchanged."""
    target = tuple(int(t) for t in np.atleast_1d(target))
    if len(target) != p.ndim:
        raise ContractError("target degree dimension mismatch")
    c = p.coeffs
    for i, (d, t) in enumerate(zip(p.degree, target)):
        if t < d:
            raise ContractError(f"target degree {t} below current {d} on axis {i}")
        if t == d:
            continue
        m = raise_matrix(d, t)
        c = np.moveaxis(np.tensordot(m, c, axes=([1], [i])), 0, i)
    return BernsteinTensor(c)


def coeff_bounds(p: BernsteinTensor) -> tuple[float, float]:
    """Range enclosure from the coefficient extrema (a relaxation, not tight)."""
    return float(p.coeffs.min()), float(p.coeffs.max())


def to_json_record(p: BernsteinTensor) -> dict:
    return {
        "n": p.ndim,
        "degree": list(p.degree),
        "coeffs": [float(x) for x in p.coeffs.ravel(order="C")],
    }


def from_json_record(rec: dict) -> BernsteinTensor:
    shape = [d + 1 for d in rec["degree"]]
    coeffs = np.asarray(rec["coeffs"], dtype=np.float64).reshape(shape, order="C")
    if len(shape) != rec["n"]:
        raise ContractError("tensor record dimension mismatch")
    return BernsteinTensor(coeffs)


def to_binary(p: BernsteinTensor) -> bytes:
    return np.ascontiguousarray(p.coeffs, dtype="<f8").tobytes()


def from_binary(data: bytes, degree) -> BernsteinTensor:
    shape = [d + 1 for d in degree]
    flat = np.frombuffer(data, dtype="<f8")
    if flat.size != int(np.prod(shape)):
        raise ContractError("binary payload size does not match degree")
    return BernsteinTensor(flat.reshape(shape))
