"""Grids, quadrature, orthonormal basis systems and empirical FPCA.

Curves live on a shared grid and are mapped to coefficient space by
quadrature inner products against a quadrature-orthonormal basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ftrend.errors import DimensionError

ORTHO_TOL = 1e-8


def _default_weights(points: np.ndarray) -> np.ndarray:
    gaps = np.diff(points)
    w = np.empty_like(points)
    w[0] = gaps[0]
    w[-1] = gaps[-1]
    w[1:-1] = 0.5 * (gaps[:-1] + gaps[1:])
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered evaluation points with positive quadrature weights.

    With no weights given, each point gets its local spacing: the constant
    step on a uniform grid, the half-distance between neighbours otherwise
    (endpoints take their single adjacent gap).
    """

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.points, dtype=float).ravel()
        if x.size < 2:
            raise ValueError("grid needs at least 2 points")
        if not np.all(np.isfinite(x)) or np.any(np.diff(x) <= 0):
            raise ValueError("grid points must be finite and strictly increasing")
        w = _default_weights(x) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.shape != x.shape:
            raise DimensionError(f"{w.size} weights for {x.size} grid points")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("quadrature weights must be positive and finite")
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "weights", w)

    @property
    def H(self) -> int:
        return self.points.size

    @classmethod
    def uniform(cls, H: int, start: float = 1.0, step: float = 1.0) -> "Grid":
        return cls(start + step * np.arange(H))

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.H == other.H
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """Curves on a common grid; ``values`` is ``(n_curves, H)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.H:
            raise DimensionError(f"values of shape {v.shape} do not match grid of {self.grid.H} points")
        if v.shape[0] < 2:
            raise ValueError("a functional dataset needs at least 2 curves")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n_curves(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """``L`` basis functions evaluated on a grid (``eval`` is ``L x H``).

    Construction checks quadrature orthonormality.
    """

    eval: np.ndarray
    grid: Grid
    variance_proportions: np.ndarray | None = field(default=None)

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.eval, dtype=float))
        if e.shape[1] != self.grid.H:
            raise DimensionError(f"basis evaluated on {e.shape[1]} points, grid has {self.grid.H}")
        gram = (e * self.grid.weights) @ e.T
        err = np.max(np.abs(gram - np.eye(e.shape[0])))
        if err > ORTHO_TOL:
            raise ValueError(f"basis is not quadrature-orthonormal (max deviation {err:.3g})")
        object.__setattr__(self, "eval", e)
        if self.variance_proportions is not None:
            p = np.asarray(self.variance_proportions, dtype=float).ravel()
            if p.size != e.shape[0]:
                raise DimensionError(f"{p.size} variance proportions for {e.shape[0]} basis functions")
            if np.any(p < 0) or p.sum() > 1 + 1e-12 or np.any(np.diff(p) > 1e-12):
                raise ValueError("variance proportions must be nonnegative, nonincreasing and sum to at most 1")
            object.__setattr__(self, "variance_proportions", p)

    @property
    def L(self) -> int:
        return self.eval.shape[0]

    def subset(self, keep) -> "BasisSystem":
        keep = np.asarray(keep)
        props = None if self.variance_proportions is None else self.variance_proportions[keep]
        return BasisSystem(self.eval[keep], self.grid, props)


def inner_product(f, g, grid: Grid) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (grid.H,) or g.shape != (grid.H,):
        raise DimensionError(f"vectors of shape {f.shape} and {g.shape} on a grid of {grid.H} points")
    return float(np.sum(grid.weights * f * g))


def project(data: FunctionalDataset, basis: BasisSystem) -> np.ndarray:
    """Scores ``z[t, l] = <y_t, phi_l>``; returns an ``(n_curves, L)`` array."""
    if data.grid != basis.grid:
        raise DimensionError("dataset and basis are defined on different grids")
    return data.values @ (basis.eval * data.grid.weights).T


def reconstruct(coef: np.ndarray, basis: BasisSystem) -> FunctionalDataset:
    coef = np.atleast_2d(np.asarray(coef, dtype=float))
    if coef.shape[1] != basis.L:
        raise DimensionError(f"coefficients have {coef.shape[1]} columns, basis has {basis.L} functions")
    return FunctionalDataset(basis.grid, coef @ basis.eval)


def fpca(
    data: FunctionalDataset,
    L: int,
    centered: bool = False,
    rank_policy: Literal["keep", "reduce", "error"] = "keep",
) -> BasisSystem:
    """Top-``L`` eigenfunctions of the empirical second-moment operator.

    The operator is uncentered unless ``centered`` is set, so the mean curve
    stays representable in the basis.  Components are computed from the SVD
    of the weight-scaled data matrix, normalized to quadrature norm one and
    sign-fixed so that each function's largest-magnitude entry is positive.

    ``rank_policy`` decides what happens when ``L`` exceeds the numerical
    rank of the data: ``"keep"`` returns the zero-variance directions anyway,
    ``"reduce"`` truncates to the rank, ``"error"`` raises.
    """
    T, H = data.values.shape
    if not 1 <= L <= min(T, H):
        raise DimensionError(f"L={L} must lie in 1..{min(T, H)}")
    Y = data.values
    if centered:
        Y = Y - Y.mean(axis=0)
    sqw = np.sqrt(data.grid.weights)
    _, s, vt = np.linalg.svd(Y * sqw, full_matrices=False)
    energy = s**2
    total = energy.sum()
    tol = max(T, H) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if L > rank:
        if rank_policy == "error":
            raise DimensionError(f"requested {L} components but the data has rank {rank}")
        if rank_policy == "reduce":
            L = max(rank, 1)
    phi = vt[:L] / sqw
    idx = np.argmax(np.abs(phi), axis=1)
    signs = np.sign(phi[np.arange(L), idx])
    signs[signs == 0] = 1.0
    phi *= signs[:, None]
    if total > 0:
        props = energy[:L] / total
        props[rank:] = 0.0
    else:
        props = np.zeros(L)
    return BasisSystem(phi, data.grid, props)
