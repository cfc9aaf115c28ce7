"""Discrete-time Stein variational gradient descent.

One synchronous update of the interacting ensemble is

    X_i <- X_i + (gamma / N) * sum_j [ k(X_j, X_i) g(X_j) + grad1 k(X_j, X_i) ]

with g = grad log pi.  Every particle is updated from the pre-step
snapshot, the dynamics are deterministic given the initial ensemble, and
a non-finite gradient or position aborts the run (clipping would corrupt
rate measurements).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import NumericalFailureError
from .fem import SPECTRAL_SCALE
from .kernels import KernelSpec, gram


@dataclass(frozen=True)
class Ensemble:
    """Particle positions (N, d) driven by the level-``level`` gradient."""

    positions: np.ndarray
    level: int = 0
    step_count: int = 0

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("ensemble must contain at least one particle")
        object.__setattr__(self, "positions", pts)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class RunConfig:
    """Step size, step count and kernel for one SVGD run."""

    gamma: float
    n_steps: int
    kernel: KernelSpec

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")


GradientFn = Callable[[np.ndarray], np.ndarray]

_CUSTOM_FUNCTIONALS: dict[str, Callable[[np.ndarray], np.ndarray]] = {}


def register_functional(name: str, fn: Callable[[np.ndarray], np.ndarray]) -> None:
    """Register a vectorized functional ((N, d) -> (N,)) under ``name``."""
    _CUSTOM_FUNCTIONALS[name] = fn


@dataclass(frozen=True)
class Functional:
    """Scalar quantity of interest phi, applied particle-wise.

    Kinds: ``l2_norm_of_field`` (the L2 norm of the spectral field, via
    trapezoid quadrature at ``quad_level``), ``coordinate`` (component
    ``index``), or any name registered with :func:`register_functional`.
    phi is assumed Lipschitz on bounded sets; this is documented, not
    enforced.
    """

    kind: str = "l2_norm_of_field"
    index: int = 0
    quad_level: int = 13

    def apply(self, positions: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if self.kind == "l2_norm_of_field":
            return _l2_field_batch(pts, self.quad_level)
        if self.kind == "coordinate":
            return pts[:, self.index].copy()
        try:
            fn = _CUSTOM_FUNCTIONALS[self.kind]
        except KeyError:
            raise ValueError(f"unknown functional kind {self.kind!r}") from None
        return np.asarray(fn(pts), dtype=float).reshape(pts.shape[0])

    def __call__(self, x) -> float:
        return float(self.apply(np.atleast_2d(x))[0])


def _quad_grid(quad_level: int, dim: int):
    s = np.linspace(0.0, 1.0, 2 ** quad_level + 1)
    modes = np.arange(1, dim + 1)
    return s, SPECTRAL_SCALE * np.sin(np.pi * np.outer(modes, s))


def _l2_field_batch(positions: np.ndarray, quad_level: int) -> np.ndarray:
    if quad_level < 1:
        raise ValueError("quad_level must be >= 1")
    s, basis = _quad_grid(quad_level, positions.shape[1])
    fields = positions @ basis
    return np.sqrt(np.trapezoid(fields**2, s, axis=1))


def phi_l2_field(x, quad_level: int) -> float:
    """Trapezoid approximation of || f(x, .) ||_{L2(0,1)} on a 2**quad_level grid."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(_l2_field_batch(x, quad_level)[0])


def _drift(positions: np.ndarray, grads: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    k = gram(kernel, positions)
    attract = k @ grads
    repulse = (positions * k.sum(axis=1)[:, None] - k @ positions) @ kernel.precision
    return (attract + repulse) / positions.shape[0]


def svgd_step(e: Ensemble, grad: GradientFn, cfg: RunConfig) -> Ensemble:
    """One synchronous update of all particles from the pre-step snapshot."""
    grads = np.asarray(grad(e.positions), dtype=float)
    if grads.shape != e.positions.shape:
        raise ValueError(
            f"gradient evaluator returned shape {grads.shape}, expected {e.positions.shape}"
        )
    bad = ~np.isfinite(grads).all(axis=1)
    if bad.any():
        idx = int(np.argmax(bad))
        raise NumericalFailureError(
            f"non-finite gradient at particle {idx} (step {e.step_count})", idx
        )
    new_positions = e.positions + cfg.gamma * _drift(e.positions, grads, cfg.kernel)
    bad = ~np.isfinite(new_positions).all(axis=1)
    if bad.any():
        idx = int(np.argmax(bad))
        raise NumericalFailureError(
            f"non-finite position at particle {idx} (step {e.step_count + 1})", idx
        )
    return replace(e, positions=new_positions, step_count=e.step_count + 1)


def svgd_run(e0: Ensemble, grad: GradientFn, cfg: RunConfig) -> Ensemble:
    """Apply ``cfg.n_steps`` updates; deterministic given the initial ensemble."""
    e = e0
    for _ in range(cfg.n_steps):
        e = svgd_step(e, grad, cfg)
    return e


def estimate(e: Ensemble, phi: Functional) -> float:
    """Empirical-measure estimate: the mean of phi over the particles."""
    return float(np.mean(phi.apply(e.positions)))
