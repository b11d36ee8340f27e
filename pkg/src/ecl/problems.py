"""Elliptic benchmark problems with manufactured solutions.

Both benchmarks pose the Poisson equation laplacian(u) = f on the unit
interval or unit square with Dirichlet data g on the boundary.  The exact
solution is chosen first; f and g are derived from it in closed form, so the
solver can always be scored against the truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .network import FieldEvaluation


@dataclass(frozen=True)
class Problem:
    """A PDE instance on the unit interval or unit square.

    ``exact``, ``forcing`` and ``boundary_value`` are vectorized over
    (n, input_dim) point arrays and return (n,) arrays.  Dirichlet data is
    the trace of the manufactured solution, so ``boundary_value`` is the
    same callable as ``exact``.
    """

    name: str
    input_dim: int
    exact: Callable[[np.ndarray], np.ndarray]
    forcing: Callable[[np.ndarray], np.ndarray]
    boundary_value: Callable[[np.ndarray], np.ndarray]

    @property
    def boundary_faces(self) -> tuple[tuple[int, float], ...]:
        """Boundary faces as (pinned coordinate index, pinned value) pairs."""
        if self.input_dim == 1:
            return ((0, 0.0), (0, 1.0))
        return ((0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0))


@dataclass(frozen=True)
class SampleBatch:
    """Collocation points in the open interior plus boundary points with data."""

    domain_points: np.ndarray
    boundary_points: np.ndarray
    boundary_values: np.ndarray


def _points(x, dim: int) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None] if dim == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"points have shape {np.shape(x)}, expected (n, {dim})")
    return X


def poisson1d(omega: int) -> Problem:
    """1-D Poisson problem manufactured from u(x) = sin(omega*pi*x).

    The forcing is the closed-form second derivative -(omega*pi)^2 sin(omega*pi*x);
    larger omega means a more oscillatory target.
    """
    if omega <= 0:
        raise ValueError(f"omega must be a positive integer, got {omega}")
    w = omega * np.pi

    def exact(x):
        return np.sin(w * _points(x, 1)[:, 0])

    def forcing(x):
        return -(w ** 2) * np.sin(w * _points(x, 1)[:, 0])

    return Problem(
        name=f"poisson1d_omega{omega}",
        input_dim=1,
        exact=exact,
        forcing=forcing,
        boundary_value=exact,
    )


def poisson2d() -> Problem:
    """2-D Poisson problem manufactured from u(x, y) = cos(15*pi*x) exp(-pi*y).

    u_xx = -(15 pi)^2 u and u_yy = +pi^2 u, so the forcing is -224 pi^2 u
    in closed form.
    """
    kx = 15.0 * np.pi

    def exact(x):
        X = _points(x, 2)
        return np.cos(kx * X[:, 0]) * np.exp(-np.pi * X[:, 1])

    def forcing(x):
        return -224.0 * np.pi ** 2 * exact(x)

    return Problem(
        name="poisson2d",
        input_dim=2,
        exact=exact,
        forcing=forcing,
        boundary_value=exact,
    )


def make_problem(name: str, omega: int = 5) -> Problem:
    """Problem lookup used by configs: 'poisson1d' (with omega) or 'poisson2d'."""
    if name == "poisson1d":
        return poisson1d(omega)
    if name == "poisson2d":
        return poisson2d()
    raise ValueError(f"unknown problem {name!r}")


# ----------------------------------------------------------------------
# samplers

def _interior_uniform(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    X = rng.random((n, dim))
    # rng.random draws from [0, 1); redraw the (measure-zero) exact zeros so
    # every point is strictly interior.
    while True:
        mask = X == 0.0
        if not mask.any():
            return X
        X[mask] = rng.random(int(mask.sum()))


def sample_domain(problem: Problem, n: int, seed: int) -> np.ndarray:
    """n i.i.d. uniform points in the open interior, deterministic per seed."""
    if n < 1:
        raise ValueError("need at least one domain point")
    return _interior_uniform(np.random.default_rng(seed), n, problem.input_dim)


def _boundary_from_rng(problem: Problem, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    if problem.input_dim == 1:
        if n != 2:
            raise ValueError("1-D problems have exactly 2 boundary points")
        points = np.array([[0.0], [1.0]])
    else:
        if n < 4:
            raise ValueError("2-D boundary sampling needs n >= 4")
        faces = problem.boundary_faces
        points = np.empty((n, 2))
        free = rng.random(n)
        for j in range(n):
            axis, value = faces[j % len(faces)]  # round-robin keeps faces balanced
            points[j, axis] = value
            points[j, 1 - axis] = free[j]
    return points, problem.boundary_value(points)


def sample_boundary(problem: Problem, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Boundary points with their Dirichlet values.

    1-D: always the two endpoints.  2-D: faces assigned round-robin, position
    uniform along each face; deterministic per seed.
    """
    return _boundary_from_rng(problem, n, np.random.default_rng(seed))


def sample_batch(problem: Problem, n_domain: int, n_boundary: int, seed: int) -> SampleBatch:
    """Domain and boundary samples drawn from a single seeded stream."""
    rng = np.random.default_rng(seed)
    return batch_from_rng(problem, n_domain, n_boundary, rng)


def batch_from_rng(problem: Problem, n_domain: int, n_boundary: int, rng) -> SampleBatch:
    """Next SampleBatch from an existing generator (for per-epoch resampling)."""
    domain = _interior_uniform(rng, n_domain, problem.input_dim)
    boundary, values = _boundary_from_rng(problem, n_boundary, rng)
    return SampleBatch(domain_points=domain, boundary_points=boundary, boundary_values=values)


def residual(evaluation: FieldEvaluation, problem: Problem, x) -> float:
    """Pointwise PDE defect laplacian(u_theta) - f at one point."""
    f = problem.forcing(np.atleast_1d(np.asarray(x, dtype=np.float64)))
    return float(evaluation.laplacian - f[0])


# ----------------------------------------------------------------------
# evaluation grids

def evaluation_grid(problem: Problem, resolution: int | None = None) -> np.ndarray:
    """Uniform grid over the closed domain.

    1-D: ``resolution`` points on [0, 1] (default 1001).  2-D:
    ``resolution`` x ``resolution`` points on the unit square (default 201),
    flattened row-major with x varying fastest.
    """
    if problem.input_dim == 1:
        res = 1001 if resolution is None else resolution
        return np.linspace(0.0, 1.0, res)[:, None]
    res = 201 if resolution is None else resolution
    axis = np.linspace(0.0, 1.0, res)
    X, Y = np.meshgrid(axis, axis)
    return np.column_stack([X.ravel(), Y.ravel()])


def export_exact_grid(problem: Problem, path, resolution: int | None = None) -> None:
    """CSV of the exact solution on the evaluation grid: x[,y],u_exact."""
    points = evaluation_grid(problem, resolution)
    values = problem.exact(points)
    cols = "x,u_exact" if problem.input_dim == 1 else "x,y,u_exact"
    with open(path, "w") as fh:
        fh.write(cols + "\n")
        for p, v in zip(points, values):
            coords = ",".join(repr(float(c)) for c in p)
            fh.write(f"{coords},{repr(float(v))}\n")
