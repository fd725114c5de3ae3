"""Constrained maximum-likelihood training of flow models.

Parameters are unconstrained tensors, one per flow factor.  A reparameterization
(elementwise softplus followed by slice-sum normalization) maps them onto the
feasible set, so plain stochastic gradient steps always yield a valid density.
Gradients are closed form throughout; no numeric differentiation is used in
the production path.

The relaxation-tightening scheme trains with the positivity constraint dropped
(normalization still hard) plus a hinge penalty on negative degree-raised
coefficients, then moves the result into the feasible set by iterative
raise / rectify / project-down / normalize sweeps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, bernstein
from .bernstein import raise_matrix
from .flow import ConditionalFlowModel, FlowModel, InvalidModelError

SOFTPLUS_FLOOR = 1e-8


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 3000
    batch_size: int = 128
    learning_rate: float = 0.01
    optimizer: str = "adam"
    degree_raise: int = 0
    penalty_weight: float = 10.0
    projection_max_iter: int = 200
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs, batch size and learning rate must be positive")
        if self.degree_raise < 0 or self.penalty_weight < 0:
            raise ValueError("degree raise and penalty weight must be non-negative")


# ---------------------------------------------------------------------------
# constraint map


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def constrain(thetas: list[np.ndarray], degree, positive: bool = True) -> list[np.ndarray]:
    """Map unconstrained factor parameters to feasible coefficient tensors.

    With ``positive=True`` (the hard-constrained path) a softplus is applied
    first, so every output is strictly positive.  Either way the slices along
    each factor's own axis are rescaled to sum to ``d_i`` exactly.
    """
    out = []
    for i, theta in enumerate(thetas):
        s = softplus(theta) + SOFTPLUS_FLOOR if positive else theta
        ssum = s.sum(axis=i, keepdims=True)
        if np.any(np.abs(ssum) < 1e-30):
            raise TrainingError(f"slice sum underflow in factor {i}")
        out.append(degree[i] * s / ssum)
    return out


def _chain_to_theta(grad_b: np.ndarray, s: np.ndarray, theta: np.ndarray,
                    axis: int, d: int, positive: bool) -> np.ndarray:
    """Backpropagate d(loss)/d(b~) through normalization and softplus."""
    ssum = s.sum(axis=axis, keepdims=True)
    grad_s = (d / ssum) * grad_b \
        - (d / ssum ** 2) * (grad_b * s).sum(axis=axis, keepdims=True)
    if positive:
        return grad_s * sigmoid(theta)
    return grad_s


# ---------------------------------------------------------------------------
# likelihood


def _factor_bases(points: np.ndarray, factor_shape) -> list[np.ndarray]:
    return [_kernels.basis_matrix(points[:, a], s - 1)
            for a, s in enumerate(factor_shape)]


def _factor_points(i: int, u: np.ndarray, w: np.ndarray | None) -> np.ndarray:
    pts = u[:, :i + 1]
    if w is not None:
        pts = np.concatenate([pts, w], axis=1)
    return pts


def nll_and_gradient(thetas: list[np.ndarray], degree, u: np.ndarray,
                     w: np.ndarray | None = None, positive: bool = True
                     ) -> tuple[float, list[np.ndarray]]:
    """Mean negative log-likelihood of a batch and its exact theta-gradient.

    The factor gradient is the classic score of a linear-in-parameters density,
    d log pi / d b_j = phi_j(u) / pi(u), accumulated over the batch and pushed
    through the constraint map's closed-form Jacobians.
    """
    coeffs = constrain(thetas, degree, positive=positive)
    total = 0.0
    grads = []
    count = u.shape[0]
    for i, (theta, b) in enumerate(zip(thetas, coeffs)):
        pts = _factor_points(i, u, w)
        bases = _factor_bases(pts, b.shape)
        v = bernstein.contract_batch(b, bases)
        bad = v <= 0.0
        good_count = count - int(bad.sum())
        if good_count == 0:
            raise TrainingError(f"factor {i} vanished on an entire batch")
        # non-positive values cannot occur on the hard-constrained path in the
        # interior; on the relaxed path the offending samples are excluded
        v = np.where(bad, 1.0, v)
        total += float(-np.log(v).sum() / good_count)
        weights = -1.0 / (v * good_count)
        weights[bad] = 0.0
        grad_b = bernstein.outer_accumulate(weights, bases, b.shape)
        s = softplus(theta) + SOFTPLUS_FLOOR if positive else theta
        grads.append(_chain_to_theta(grad_b, s, theta, axis=i, d=degree[i],
                                     positive=positive))
    return total, grads


# ---------------------------------------------------------------------------
# degree-raise penalty and projection


def _raise_all_axes(t: np.ndarray, amount: int) -> np.ndarray:
    for axis in range(t.ndim):
        d = t.shape[axis] - 1
        m = raise_matrix(d, d + amount)
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [axis])), 0, axis)
    return t


def _lower_all_axes(t: np.ndarray, amount: int) -> np.ndarray:
    # least-squares down-projection: Moore-Penrose pseudo-inverse of the
    # per-axis raise matrix
    for axis in range(t.ndim):
        dp = t.shape[axis] - 1
        m = np.linalg.pinv(raise_matrix(dp - amount, dp))
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [axis])), 0, axis)
    return t


def _raise_adjoint(g: np.ndarray, amount: int) -> np.ndarray:
    for axis in range(g.ndim):
        dp = g.shape[axis] - 1
        m = raise_matrix(dp - amount, dp)
        g = np.moveaxis(np.tensordot(m.T, g, axes=([1], [axis])), 0, axis)
    return g


def degree_raise_penalty(thetas: list[np.ndarray], degree, amount: int,
                         positive: bool = False) -> tuple[float, list[np.ndarray]]:
    """Hinge penalty on negative raised coefficients, with its theta-gradient.

    Zero whenever the raised representation is non-negative; feasible
    parameters therefore incur no penalty.
    """
    coeffs = constrain(thetas, degree, positive=positive)
    total = 0.0
    grads = []
    for i, (theta, b) in enumerate(zip(thetas, coeffs)):
        raised = _raise_all_axes(b, amount) if amount > 0 else b
        neg = np.minimum(raised, 0.0)
        total += float(-neg.sum())
        g_raised = -(raised < 0.0).astype(np.float64)
        grad_b = _raise_adjoint(g_raised, amount) if amount > 0 else g_raised
        s = softplus(theta) + SOFTPLUS_FLOOR if positive else theta
        grads.append(_chain_to_theta(grad_b, s, theta, axis=i, d=degree[i],
                                     positive=positive))
    return total, grads


def _repair_collapsed_slices(b: np.ndarray, axis: int) -> np.ndarray:
    """Replace slices with nonpositive sum along ``axis`` by flat slices.

    A slice can lose all its mass when every coefficient conditioning on some
    region went negative (no training data landed there); the uniform slice is
    the neutral feasible choice for such regions.
    """
    ssum = b.sum(axis=axis, keepdims=True)
    bad = ssum <= 1e-300
    if np.any(bad):
        b = np.where(np.broadcast_to(bad, b.shape), 1.0, b)
    return b


def feasibility_projection(coeffs: list[np.ndarray], degree, amount: int,
                           max_iter: int = 200) -> list[np.ndarray]:
    """Move coefficient tensors into the feasible set.

    Repeats raise -> rectify negatives -> project down -> renormalize while
    that improves the worst raised coefficient.  The least-squares
    down-projection amplifies perturbations when the raise matrix is
    ill-conditioned (large raise amounts), so once it stalls the best iterate
    is blended toward the uniform factor, which is feasible at any raise,
    shares the slice sums, and makes the result exactly non-negative with the
    smallest possible blend weight.
    """

    def raised_min(b):
        return float((_raise_all_axes(b, amount) if amount > 0 else b).min())

    out = []
    for i, b in enumerate(coeffs):
        b = _repair_collapsed_slices(b, axis=i)
        b = degree[i] * b / b.sum(axis=i, keepdims=True)
        best, best_worst = b, raised_min(b)
        for _ in range(max_iter):
            if best_worst >= -1e-12:
                break
            raised = _raise_all_axes(b, amount) if amount > 0 else b
            rect = np.maximum(raised, 0.0)
            b = _lower_all_axes(rect, amount) if amount > 0 else rect
            b = _repair_collapsed_slices(b, axis=i)
            b = degree[i] * b / b.sum(axis=i, keepdims=True)
            worst = raised_min(b)
            if worst > best_worst:
                best, best_worst = b, worst
            else:
                break
        if best_worst < -1e-12:
            lam = -best_worst / (1.0 - best_worst)
            best = (1.0 - lam) * best + lam
        out.append(np.maximum(best, 0.0) if amount == 0 else best)
    return out


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    def __init__(self, shapes, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# ---------------------------------------------------------------------------
# fitting drivers


def _factor_shapes(degree, cond_degree=None):
    shapes = []
    for i in range(len(degree)):
        shape = tuple(d + 1 for d in degree[:i]) + (degree[i],)
        if cond_degree is not None:
            shape = shape + tuple(c + 1 for c in cond_degree)
        shapes.append(shape)
    return shapes


def _init_thetas(shapes, rng: np.random.Generator, positive: bool):
    if positive:
        return [0.01 * rng.standard_normal(s) for s in shapes]
    return [1.0 + 0.01 * rng.standard_normal(s) for s in shapes]


def _sgd_loop(thetas, degree, u, w, cfg: TrainConfig, positive: bool,
              penalty_amount: int):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB7]))
    if cfg.optimizer != "adam":
        raise TrainingError(f"unsupported optimizer: {cfg.optimizer}")
    opt = Adam([t.shape for t in thetas], cfg.learning_rate)
    count = u.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(count)
        epoch_nll, epoch_pen, batches = 0.0, 0.0, 0
        for start in range(0, count, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bu = u[idx]
            bw = w[idx] if w is not None else None
            nll, grads = nll_and_gradient(thetas, degree, bu, bw, positive=positive)
            if not np.isfinite(nll):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            pen = 0.0
            if penalty_amount > 0 and cfg.penalty_weight > 0:
                pen, pgrads = degree_raise_penalty(thetas, degree, penalty_amount,
                                                  positive=positive)
                for g, pg in zip(grads, pgrads):
                    g += cfg.penalty_weight * pg
            opt.step(thetas, grads)
            epoch_nll += nll
            epoch_pen += pen
            batches += 1
        history.append({
            "epoch": epoch,
            "nll": epoch_nll / batches,
            "penalty": epoch_pen / batches,
            "seconds": time.perf_counter() - t0,
        })
    return history


def fit_initial(data_x: np.ndarray, transform, degree, cfg: TrainConfig
                ) -> tuple[FlowModel, list[dict]]:
    """Hard-constrained MLE fit of the initial-state density."""
    degree = tuple(int(d) for d in np.atleast_1d(degree))
    u = transform.forward(np.asarray(data_x, dtype=np.float64))
    if u.ndim == 1:
        u = u[:, None]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x1]))
    thetas = _init_thetas(_factor_shapes(degree), rng, positive=True)
    history = _sgd_loop(thetas, degree, u, None, cfg, positive=True, penalty_amount=0)
    model = FlowModel(degree, [bernstein.BernsteinTensor(c)
                               for c in constrain(thetas, degree, positive=True)])
    return model, history


def fit_transition(pairs_x: np.ndarray, pairs_xp: np.ndarray, transform, degree,
                   cfg: TrainConfig) -> tuple[ConditionalFlowModel, list[dict]]:
    """Hard-constrained MLE fit of the state-transition density p(u' | u)."""
    degree = tuple(int(d) for d in np.atleast_1d(degree))
    cond_degree = degree  # conditioning degree matches the state degree per axis
    w = transform.forward(np.asarray(pairs_x, dtype=np.float64))
    u = transform.forward(np.asarray(pairs_xp, dtype=np.float64))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x2]))
    thetas = _init_thetas(_factor_shapes(degree, cond_degree), rng, positive=True)
    history = _sgd_loop(thetas, degree, u, w, cfg, positive=True, penalty_amount=0)
    model = ConditionalFlowModel(
        degree, cond_degree,
        [bernstein.BernsteinTensor(c) for c in constrain(thetas, degree, positive=True)])
    return model, history


def train_relaxed(data, transform, degree, cfg: TrainConfig, conditional: bool = False):
    """Soft-penalty training with the positivity constraint relaxed.

    ``data`` is either an (N, n) array (initial model) or an ``(x, x')`` pair
    of arrays (transition model).  With ``cfg.degree_raise == 0`` and penalty
    weight 0 this reduces to the hard-constrained behavior up to the missing
    softplus.  The returned model is always feasible: the trained coefficients
    pass through :func:`feasibility_projection` before model construction.
    """
    degree = tuple(int(d) for d in np.atleast_1d(degree))
    if conditional:
        x, xp = data
        w = transform.forward(np.asarray(x, dtype=np.float64))
        u = transform.forward(np.asarray(xp, dtype=np.float64))
        shapes = _factor_shapes(degree, degree)
    else:
        u = transform.forward(np.asarray(data, dtype=np.float64))
        if u.ndim == 1:
            u = u[:, None]
        w = None
        shapes = _factor_shapes(degree)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x3]))
    thetas = _init_thetas(shapes, rng, positive=False)
    history = _sgd_loop(thetas, degree, u, w, cfg, positive=False,
                        penalty_amount=cfg.degree_raise)
    coeffs = constrain(thetas, degree, positive=False)
    coeffs = feasibility_projection(coeffs, degree, cfg.degree_raise,
                                    cfg.projection_max_iter)
    tensors = [bernstein.BernsteinTensor(c) for c in coeffs]
    if conditional:
        model = ConditionalFlowModel(degree, degree, tensors,
                                     certificate_raise=cfg.degree_raise)
    else:
        model = FlowModel(degree, tensors, certificate_raise=cfg.degree_raise)
    return model, history
