"""Preconditioned Gaussian kernel and its first-argument gradient.

The particle update consumes exactly two kernel quantities: k(x, y) and
the gradient of k with respect to its first argument.  The kernel is
stationary, k(x, y) = exp(-0.5 (x-y)' M (x-y)) for a fixed symmetric
positive-definite precision matrix M, so values lie in (0, 1] and the
gradient vanishes on the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class KernelSpec:
    """Stationary Gaussian kernel with precision matrix ``precision``.

    ``precision`` must be symmetric exactly as stored and positive definite;
    both are checked at construction.  The proportionality constant of the
    kernel is fixed to 1 (it is redundant with the step size).
    """

    precision: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        m = np.asarray(self.precision, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"precision must be a square matrix, got shape {m.shape}")
        d = self.dim if self.dim else m.shape[0]
        if d < 1:
            raise ValueError("dim must be >= 1")
        if m.shape != (d, d):
            raise ValueError(f"precision shape {m.shape} does not match dim {d}")
        if not np.array_equal(m, m.T):
            raise ValueError("precision must be symmetric as stored")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise ValueError("precision must be positive definite") from exc
        object.__setattr__(self, "precision", m)
        object.__setattr__(self, "dim", d)


def isotropic_kernel(dim: int, scale: float = 1.0) -> KernelSpec:
    """Kernel with precision ``scale * I``; convenient for tests and demos."""
    return KernelSpec(precision=np.eye(dim) * float(scale), dim=dim)


def diagonal_kernel(precisions) -> KernelSpec:
    """Kernel with diagonal precision, e.g. the inverse prior variances."""
    p = np.asarray(precisions, dtype=float)
    return KernelSpec(precision=np.diag(p), dim=p.size)


def _check_pair(spec: KernelSpec, x, y):
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != spec.dim or y.size != spec.dim:
        raise ValueError(
            f"kernel arguments must have length {spec.dim}, got {x.size} and {y.size}"
        )
    return x, y


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """k(x, y) = exp(-0.5 (x-y)' M (x-y)); symmetric, in (0, 1]."""
    x, y = _check_pair(spec, x, y)
    diff = x - y
    return float(np.exp(-0.5 * diff @ spec.precision @ diff))


def kernel_grad1(spec: KernelSpec, x, y) -> np.ndarray:
    """Gradient of k in its first argument: -M (x-y) k(x, y)."""
    x, y = _check_pair(spec, x, y)
    diff = x - y
    return -(spec.precision @ diff) * np.exp(-0.5 * diff @ spec.precision @ diff)


def gram(spec: KernelSpec, positions: np.ndarray) -> np.ndarray:
    """All-pairs kernel matrix K[i, j] = k(x_i, x_j) for an (N, d) array.

    Uses the expanded quadratic form so the cost is three BLAS products
    instead of an (N, N, d) temporary; the tiny negative values the
    expansion can produce on the diagonal are clipped before
    exponentiation so K stays within (0, 1].
    """
    x = np.asarray(positions, dtype=float)
    mx = x @ spec.precision
    sq = np.einsum("ij,ij->i", x, mx)
    q = sq[:, None] + sq[None, :] - 2.0 * (x @ mx.T)
    np.maximum(q, 0.0, out=q)
    return np.exp(-0.5 * q)
