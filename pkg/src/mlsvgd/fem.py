"""Piecewise-linear finite elements for -u'' + u = f on (0, 1).

Dyadic meshes: level l has 2**l elements of width h = 2**-l and
2**l - 1 interior nodes; the boundary values are pinned to zero.  The
right-hand side f is parametrized by spectral coefficients x through
f(x, s) = sum_i x_i (sqrt(2)/pi) sin(i pi s), and the forward map
"coefficients -> solution values at observation points" is linear, so it
is precomputed once per level as a dense matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPECTRAL_SCALE = np.sqrt(2.0) / np.pi


@dataclass(frozen=True)
class Mesh1D:
    """Uniform dyadic mesh on (0, 1) with 2**level elements."""

    level: int

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("mesh level must be >= 1 (level 0 has no interior nodes)")

    @property
    def n_elements(self) -> int:
        return 2 ** self.level

    @property
    def h(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def n_interior(self) -> int:
        return 2 ** self.level - 1

    def interior_nodes(self) -> np.ndarray:
        return np.arange(1, self.n_elements) * self.h


@dataclass(frozen=True)
class NodalFunction:
    """Interior nodal values of a piecewise-linear function, zero on the boundary."""

    level: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        expected = 2 ** self.level - 1
        if vals.shape != (expected,):
            raise ValueError(
                f"level {self.level} needs {expected} interior values, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ForwardMatrix:
    """Dense level-l forward map A_l: spectral coefficients -> observed values."""

    level: int
    matrix: np.ndarray
    obs_points: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)


def spectral_to_nodal(x, level: int) -> NodalFunction:
    """Evaluate f(x, s) = sum_i x_i (sqrt(2)/pi) sin(i pi s) at the interior nodes."""
    mesh = Mesh1D(level)
    x = np.asarray(x, dtype=float).reshape(-1)
    nodes = mesh.interior_nodes()
    modes = np.arange(1, x.size + 1)
    basis = SPECTRAL_SCALE * np.sin(np.pi * np.outer(nodes, modes))
    return NodalFunction(level=level, values=basis @ x)


def thomas_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a tridiagonal system by elimination without pivoting.

    ``lower``/``upper`` hold the sub/super-diagonals (length n-1).  Safe
    here because the assembled stiffness-plus-mass matrix is symmetric
    positive definite.
    """
    n = len(rhs)
    w = np.empty(n - 1) if n > 1 else np.empty(0)
    g = np.empty(n)
    denom = diag[0]
    g[0] = rhs[0] / denom
    for i in range(1, n):
        w[i - 1] = upper[i - 1] / denom
        denom = diag[i] - lower[i - 1] * w[i - 1]
        g[i] = (rhs[i] - lower[i - 1] * g[i - 1]) / denom
    out = g
    for i in range(n - 2, -1, -1):
        out[i] -= w[i] * out[i + 1]
    return out


def system_diagonals(level: int):
    """Diagonals of K + Mass with K = (1/h) tridiag(-1, 2, -1), Mass = (h/6) tridiag(1, 4, 1)."""
    mesh = Mesh1D(level)
    h = mesh.h
    n = mesh.n_interior
    diag = np.full(n, 2.0 / h + 4.0 * h / 6.0)
    off = np.full(max(n - 1, 0), -1.0 / h + h / 6.0)
    return off, diag, off


def mass_apply(level: int, values: np.ndarray) -> np.ndarray:
    """Consistent-mass product Mass @ values (boundary values are zero)."""
    h = 2.0 ** (-level)
    out = 4.0 * values.copy()
    out[:-1] += values[1:]
    out[1:] += values[:-1]
    return (h / 6.0) * out


def solve_bvp(level: int, f: NodalFunction) -> NodalFunction:
    """Galerkin solve of (K + Mass) u = Mass f with homogeneous Dirichlet data."""
    if f.level != level:
        raise ValueError(f"load is at level {f.level}, expected {level}")
    lower, diag, upper = system_diagonals(level)
    rhs = mass_apply(level, f.values)
    return NodalFunction(level=level, values=thomas_solve(lower, diag, upper, rhs))


def observe(u: NodalFunction, obs_points) -> np.ndarray:
    """Piecewise-linear interpolation of u (zero at 0 and 1) at points in (0, 1)."""
    pts = np.asarray(obs_points, dtype=float).reshape(-1)
    if np.any(pts <= 0.0) or np.any(pts >= 1.0):
        raise ValueError("observation points must lie strictly inside (0, 1)")
    mesh = Mesh1D(u.level)
    grid = np.concatenate(([0.0], mesh.interior_nodes(), [1.0]))
    vals = np.concatenate(([0.0], u.values, [0.0]))
    return np.interp(pts, grid, vals)


def default_obs_points(n_y: int) -> np.ndarray:
    """Equispaced observation points s_i = i / (n_y + 1), i = 1..n_y."""
    return np.arange(1, n_y + 1) / (n_y + 1.0)


def forward_matrix(level: int, d: int, obs_points) -> ForwardMatrix:
    """Assemble A_l column by column: A_l[:, j] = observe(solve(level, basis_j))."""
    pts = np.asarray(obs_points, dtype=float).reshape(-1)
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        u = solve_bvp(level, spectral_to_nodal(e, level))
        cols.append(observe(u, pts))
    return ForwardMatrix(level=level, matrix=np.column_stack(cols), obs_points=pts)
