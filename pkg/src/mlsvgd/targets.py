"""Level hierarchy of posterior log-density gradients.

Two target kinds share one interface:

* ``pde_posterior`` - the finite-element benchmark: the likelihood at
  level l uses the precomputed forward matrix A_l, while the Gaussian
  prior term is exact at every level.
* ``analytic_gaussian`` - a conjugate-Gaussian target with a fixed linear
  forward map (optionally an artificial per-level family), whose posterior
  moments are available in closed form and serve as a test oracle.

Gradients are exact and deterministic:
grad log pi_l(x) = -A_l' (A_l x - y) / sigma^2 - C0^{-1} x.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import LevelNotAvailableError
from .fem import ForwardMatrix
from .seeding import Seed, rng_for

PDE_POSTERIOR = "pde_posterior"
ANALYTIC_GAUSSIAN = "analytic_gaussian"


@dataclass(frozen=True)
class PriorSpec:
    """Zero-mean Gaussian prior with diagonal covariance ``variances``."""

    dim: int
    variances: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("prior dim must be >= 1")
        if self.variances is None:
            v = default_prior_variances(self.dim)
        else:
            v = np.asarray(self.variances, dtype=float).reshape(-1)
        if v.shape != (self.dim,):
            raise ValueError(f"need {self.dim} variances, got shape {v.shape}")
        if np.any(v <= 0.0):
            raise ValueError("prior variances must be positive")
        object.__setattr__(self, "variances", v)

    def covariance(self) -> np.ndarray:
        return np.diag(self.variances)

    def precision(self) -> np.ndarray:
        return np.diag(1.0 / self.variances)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, self.dim)) * np.sqrt(self.variances)


def default_prior_variances(dim: int) -> np.ndarray:
    """Spectral decay diag(i^-2), i = 1..dim."""
    return 1.0 / np.arange(1, dim + 1, dtype=float) ** 2


@dataclass(frozen=True)
class NoiseSpec:
    """Isotropic Gaussian observation noise with variance sigma^2."""

    n_y: int
    variance: float

    def __post_init__(self):
        if self.n_y < 1:
            raise ValueError("n_y must be >= 1")
        if self.variance <= 0.0:
            raise ValueError("noise variance must be positive")


@dataclass(frozen=True)
class LevelTargetSpec:
    """Everything needed to evaluate grad log pi_l plus the cost exponent q.

    ``forward`` maps level -> forward matrix for the PDE posterior.  The
    analytic kind accepts either a single matrix (served at every level,
    which makes telescoping collapse exact) or a level-indexed family of
    matrices for artificial hierarchies with a known decay rate.
    """

    kind: str
    prior: PriorSpec
    noise: NoiseSpec
    data: np.ndarray
    forward: Mapping[int, ForwardMatrix] | Mapping[int, np.ndarray] | np.ndarray
    q: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in (PDE_POSTERIOR, ANALYTIC_GAUSSIAN):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.q < 0.0 or self.beta <= 0.0:
            raise ValueError("need q >= 0 and beta > 0")
        y = np.asarray(self.data, dtype=float).reshape(-1)
        if y.shape != (self.noise.n_y,):
            raise ValueError(f"data must have length {self.noise.n_y}, got {y.shape}")
        object.__setattr__(self, "data", y)

    @property
    def dim(self) -> int:
        return self.prior.dim

    def level_matrix(self, level: int) -> np.ndarray:
        """Forward matrix serving level ``level``."""
        if isinstance(self.forward, np.ndarray):
            return self.forward
        try:
            entry = self.forward[level]
        except KeyError:
            raise LevelNotAvailableError(level) from None
        return entry.matrix if isinstance(entry, ForwardMatrix) else np.asarray(entry)

    def available_levels(self):
        if isinstance(self.forward, np.ndarray):
            return None
        return sorted(self.forward)


def grad_log_posterior(spec: LevelTargetSpec, level: int, x) -> np.ndarray:
    """Exact posterior log-density gradient at one point."""
    x = np.asarray(x, dtype=float).reshape(-1)
    a = spec.level_matrix(level)
    residual = a @ x - spec.data
    return -(a.T @ residual) / spec.noise.variance - x / spec.prior.variances


def gradient_evaluator(spec: LevelTargetSpec, level: int):
    """Vectorized gradient for an (N, d) array of particle positions.

    The forward matrix is resolved once, so a missing level fails fast
    rather than mid-run.
    """
    a = spec.level_matrix(level)
    inv_var = 1.0 / spec.noise.variance
    prior_prec = 1.0 / spec.prior.variances
    y = spec.data

    def grad(positions: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        residual = pts @ a.T - y
        return -inv_var * (residual @ a) - pts * prior_prec

    return grad


def analytic_posterior_moments(a, y, noise: NoiseSpec, prior: PriorSpec):
    """Conjugate-Gaussian posterior moments for the linear model y = A x + eta.

    cov = (A'A / sigma^2 + C0^{-1})^{-1},  mean = cov A' y / sigma^2.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if a.shape != (noise.n_y, prior.dim):
        raise ValueError(f"forward matrix shape {a.shape} != ({noise.n_y}, {prior.dim})")
    precision = a.T @ a / noise.variance + prior.precision()
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (a.T @ y) / noise.variance
    return mean, cov


def synthesize_data(
    spec: LevelTargetSpec, x_true, data_level: int, seed: Seed
) -> np.ndarray:
    """Draw y = A_l x_true + sigma * xi with a seeded standard-normal xi."""
    a = spec.level_matrix(data_level)
    x_true = np.asarray(x_true, dtype=float).reshape(-1)
    xi = rng_for(seed).standard_normal(spec.noise.n_y)
    return a @ x_true + np.sqrt(spec.noise.variance) * xi


def analytic_target(
    a,
    y,
    noise: NoiseSpec,
    prior: PriorSpec,
    q: float = 0.0,
    beta: float = 1.0,
    level_matrices: Mapping[int, np.ndarray] | None = None,
) -> LevelTargetSpec:
    """Conjugate-Gaussian target; ``level_matrices`` overrides the single map."""
    forward = level_matrices if level_matrices is not None else np.asarray(a, dtype=float)
    return LevelTargetSpec(
        kind=ANALYTIC_GAUSSIAN,
        prior=prior,
        noise=noise,
        data=y,
        forward=forward,
        q=q,
        beta=beta,
    )
