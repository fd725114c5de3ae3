"""Diagonal diffeomorphisms from state space onto the open unit box."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

CLAMP_EPS = 1e-12

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class TransformError(ValueError):
    pass


class DiagonalTransform:
    """Per-dimension monotone map from state space to (0, 1)^n.

    Two kinds are supported: ``gaussian_cdf`` (componentwise normal CDF with
    per-dimension mean/std, for unbounded state spaces) and ``affine``
    (linear rescaling of a bounded box).  Forward evaluation clamps into
    ``[CLAMP_EPS, 1 - CLAMP_EPS]`` so downstream logs stay finite; the number
    of clamped components is tracked in ``clamp_count``.
    """

    def __init__(self, kind: str, **params):
        self.kind = kind
        self.clamp_count = 0
        if kind == "gaussian_cdf":
            self.mean = np.asarray(params["mean"], dtype=np.float64)
            self.std = np.asarray(params["std"], dtype=np.float64)
            if np.any(self.std <= 0):
                raise TransformError("std must be positive")
            self.n = self.mean.shape[0]
        elif kind == "affine":
            self.lo = np.asarray(params["lo"], dtype=np.float64)
            self.hi = np.asarray(params["hi"], dtype=np.float64)
            if np.any(self.lo >= self.hi):
                raise TransformError("need lo < hi")
            self.n = self.lo.shape[0]
        else:
            raise TransformError(f"unknown transform kind: {kind}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise TransformError("non-finite state point")
        if self.kind == "gaussian_cdf":
            u = ndtr((x - self.mean) / self.std)
        else:
            u = (x - self.lo) / (self.hi - self.lo)
        clipped = np.clip(u, CLAMP_EPS, 1.0 - CLAMP_EPS)
        self.clamp_count += int(np.count_nonzero(clipped != u))
        return clipped

    def inverse(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise TransformError("inverse requires u strictly inside (0, 1)")
        if self.kind == "gaussian_cdf":
            z = ndtri(u)
            # one Newton polish step on ndtr(z) = u
            z = z - (ndtr(z) - u) * np.sqrt(2.0 * np.pi) * np.exp(0.5 * z * z)
            return self.mean + self.std * z
        return self.lo + u * (self.hi - self.lo)

    def log_det_jacobian(self, x: np.ndarray) -> float:
        """Sum over dimensions of log dOmega_i/dx_i at x.

        Returns -inf when the derivative underflows (point far in a Gaussian
        tail); callers count such points separately.
        """
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "gaussian_cdf":
            z = (x - self.mean) / self.std
            terms = -0.5 * z * z - _LOG_SQRT_2PI - np.log(self.std)
        else:
            terms = -np.log(self.hi - self.lo)
        total = float(np.sum(terms))
        return total if np.isfinite(total) else -np.inf

    def log_det_jacobian_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "gaussian_cdf":
            z = (x - self.mean) / self.std
            terms = -0.5 * z * z - _LOG_SQRT_2PI - np.log(self.std)
        else:
            terms = np.broadcast_to(-np.log(self.hi - self.lo), x.shape)
        return terms.sum(axis=-1)

    def map_box(self, lo, hi) -> tuple[np.ndarray, np.ndarray]:
        """Image of an x-space box ([lo, hi], possibly infinite) in u-space."""
        lo = np.where(np.isfinite(lo), lo, np.where(np.asarray(lo) > 0, 1e300, -1e300))
        hi = np.where(np.isfinite(hi), hi, np.where(np.asarray(hi) > 0, 1e300, -1e300))
        ulo = np.clip(self.forward(lo), 0.0, 1.0)
        uhi = np.clip(self.forward(hi), 0.0, 1.0)
        # clamping is exact at the ends: Omega is onto (0, 1)
        ulo = np.where(ulo <= 2 * CLAMP_EPS, 0.0, ulo)
        uhi = np.where(uhi >= 1.0 - 2 * CLAMP_EPS, 1.0, uhi)
        return ulo, uhi

    def to_json_record(self) -> dict:
        if self.kind == "gaussian_cdf":
            return {"kind": self.kind, "mean": list(self.mean), "std": list(self.std)}
        return {"kind": self.kind, "lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_json_record(cls, rec: dict) -> "DiagonalTransform":
        params = {k: v for k, v in rec.items() if k != "kind"}
        return cls(rec["kind"], **params)


def moment_match(data: np.ndarray, variance_buffer: float = 0.0) -> DiagonalTransform:
    """Gaussian-CDF transform with per-dimension sample mean and inflated variance.

    The variance is the unbiased sample variance plus ``variance_buffer``,
    which eases boundary steepness for sharply peaked targets.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] < 2:
        raise TransformError("moment matching needs at least 2 points")
    if not np.all(np.isfinite(data)):
        raise TransformError("non-finite data")
    if variance_buffer < 0:
        raise TransformError("variance buffer must be >= 0")
    mean = data.mean(axis=0)
    var = data.var(axis=0, ddof=1)
    if np.any(var == 0):
        raise TransformError("zero variance in some dimension")
    return DiagonalTransform("gaussian_cdf", mean=mean, std=np.sqrt(var + variance_buffer))
