"""Ground-truth stochastic benchmark systems and dataset generation.

Both benchmark systems are 2-D Euler-discretized oscillators: a Van der Pol
oscillator with additive Gaussian noise and a stable oscillator with
multiplicative two-component Gaussian-mixture noise.  All randomness flows
through seeded PCG64 generators; trajectory generation derives per-trajectory
child seeds from the root seed so it is reproducible regardless of chunking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VDP_NOISE_COV = 0.1 * np.eye(2)
OSC_MIX_WEIGHTS = (0.6, 0.4)
OSC_MIX_MEANS = (np.zeros(2), np.array([0.5, 0.5]))
OSC_MIX_COVS = (
    np.array([[0.03, 0.006], [0.006, 0.03]]),
    np.array([[0.03, -0.006], [-0.006, 0.03]]),
)
DEFAULT_INIT_MEAN = np.array([0.2, 0.1])
DEFAULT_INIT_COV = 0.2 * np.eye(2)


class SystemError(ValueError):
    pass


@dataclass
class SystemSpec:
    kind: str = "vanderpol"  # vanderpol | oscillator
    dt: float = 0.3
    mu: float = 1.0  # Van der Pol stiffness; not fixed by the benchmark, so a knob
    noise_scale: float = 1.0  # 0 disables noise (testing hook)

    def __post_init__(self):
        if self.dt <= 0:
            raise SystemError("dt must be positive")
        if self.kind not in ("vanderpol", "oscillator"):
            raise SystemError(f"unknown system kind: {self.kind}")

    @property
    def dim(self) -> int:
        return 2

    def to_json_record(self) -> dict:
        return {"kind": self.kind, "dt": self.dt, "mu": self.mu,
                "noise_scale": self.noise_scale}

    @classmethod
    def from_json_record(cls, rec: dict) -> "SystemSpec":
        return cls(**rec)


@dataclass
class Dataset:
    initials: np.ndarray  # (N0, 2)
    pairs_x: np.ndarray   # (N, 2)
    pairs_xp: np.ndarray  # (N, 2)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pairs_x.shape != self.pairs_xp.shape:
            raise SystemError("pair arrays must have matching shapes")
        for arr in (self.initials, self.pairs_x, self.pairs_xp):
            if not np.all(np.isfinite(arr)):
                raise SystemError("non-finite dataset entries")


def _chol(c: np.ndarray) -> np.ndarray:
    return np.linalg.cholesky(c)


_VDP_CHOL = _chol(VDP_NOISE_COV)
_OSC_CHOLS = tuple(_chol(c) for c in OSC_MIX_COVS)


def sample_noise(spec: SystemSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    if spec.noise_scale == 0.0:
        return np.zeros((count, 2))
    z = rng.standard_normal((count, 2))
    if spec.kind == "vanderpol":
        v = z @ _VDP_CHOL.T
    else:
        comp = rng.random(count) >= OSC_MIX_WEIGHTS[0]
        v = np.where(comp[:, None],
                     OSC_MIX_MEANS[1] + z @ _OSC_CHOLS[1].T,
                     OSC_MIX_MEANS[0] + z @ _OSC_CHOLS[0].T)
    return spec.noise_scale * v


def step(spec: SystemSpec, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Euler step with sampled noise; accepts a point or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if not np.all(np.isfinite(xb)):
        raise SystemError("non-finite state")
    v = sample_noise(spec, rng, xb.shape[0])
    x1, x2 = xb[:, 0], xb[:, 1]
    if spec.kind == "vanderpol":
        n1 = x1 + spec.dt * x2 + v[:, 0]
        n2 = x2 + spec.dt * (spec.mu * (1.0 - x1 ** 2) * x2 - x1) + v[:, 1]
    else:
        n1 = x1 + spec.dt * (x1 - x1 ** 3 - 0.5 * x2) + x1 * v[:, 0]
        n2 = x2 + spec.dt * (x2 - x2 ** 3 - 0.5 * x1) + x2 * v[:, 1]
    out = np.column_stack([n1, n2])
    return out[0] if single else out


def sample_initials(rng: np.random.Generator, count: int,
                    mean=DEFAULT_INIT_MEAN, cov=DEFAULT_INIT_COV) -> np.ndarray:
    return rng.standard_normal((count, 2)) @ _chol(np.asarray(cov)).T + np.asarray(mean)


def generate(spec: SystemSpec, n_initial: int, trajectories: int, horizon: int,
             seed: int, init_mean=DEFAULT_INIT_MEAN, init_cov=DEFAULT_INIT_COV
             ) -> Dataset:
    """Initial-state samples plus all consecutive pairs of simulated trajectories."""
    if n_initial <= 0 or trajectories <= 0 or horizon <= 0:
        raise SystemError("counts must be positive")
    root = np.random.SeedSequence(seed)
    init_seq, traj_seq = root.spawn(2)
    initials = sample_initials(np.random.default_rng(init_seq), n_initial,
                               init_mean, init_cov)
    xs = np.empty((trajectories, horizon + 1, 2))
    child_seqs = traj_seq.spawn(trajectories)
    for t, child in enumerate(child_seqs):
        rng = np.random.default_rng(child)
        x = sample_initials(rng, 1, init_mean, init_cov)[0]
        xs[t, 0] = x
        for k in range(horizon):
            x = step(spec, x, rng)
            xs[t, k + 1] = x
    pairs_x = xs[:, :-1].reshape(-1, 2)
    pairs_xp = xs[:, 1:].reshape(-1, 2)
    meta = {
        "system": spec.to_json_record(),
        "seed": seed,
        "n_initial": n_initial,
        "trajectories": trajectories,
        "horizon": horizon,
        "n_pairs": pairs_x.shape[0],
        "init_mean": list(np.asarray(init_mean, dtype=float)),
        "init_cov": [list(map(float, row)) for row in np.asarray(init_cov)],
    }
    return Dataset(initials=initials, pairs_x=pairs_x, pairs_xp=pairs_xp, metadata=meta)


def simulate_marginal(spec: SystemSpec, k: int, samples: int, seed: int,
                      init_mean=DEFAULT_INIT_MEAN, init_cov=DEFAULT_INIT_COV
                      ) -> np.ndarray:
    """Monte Carlo particles from the true system after k steps."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = sample_initials(rng, samples, init_mean, init_cov)
    for _ in range(k):
        x = step(spec, x, rng)
    return x


def mc_belief_grid(spec: SystemSpec, k: int, samples: int, window_lo, window_hi,
                   resolution: int, seed: int,
                   init_mean=DEFAULT_INIT_MEAN, init_cov=DEFAULT_INIT_COV
                   ) -> np.ndarray:
    """Histogram density estimate on a regular window; rows (x1, x2, density).

    Serves as the Monte Carlo ground-truth panel and as a test oracle; mass
    that escapes the window is simply not counted.
    """
    if samples < 10_000:
        raise SystemError("mc_belief_grid needs at least 1e4 samples")
    pts = simulate_marginal(spec, k, samples, seed, init_mean, init_cov)
    edges1 = np.linspace(window_lo[0], window_hi[0], resolution + 1)
    edges2 = np.linspace(window_lo[1], window_hi[1], resolution + 1)
    hist, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=[edges1, edges2])
    cell = (edges1[1] - edges1[0]) * (edges2[1] - edges2[0])
    dens = hist / (samples * cell)
    c1 = 0.5 * (edges1[:-1] + edges1[1:])
    c2 = 0.5 * (edges2[:-1] + edges2[1:])
    g1, g2 = np.meshgrid(c1, c2, indexing="ij")
    return np.column_stack([g1.ravel(), g2.ravel(), dens.ravel()])
