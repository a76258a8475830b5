"""K-fold cross-validation of the smoothing weights.

Folds interleave: fold ``j`` holds curves ``j, j+K, j+2K, ...``.  Each fold
is refit on the retained curves (re-indexed as a contiguous chain, or as the
induced subgraph), and every held-out curve is predicted from its retained
neighbours: the midpoint of the nearest retained curves before and after it
on a chain, the mean over retained adjacent vertices on a graph.  Validation
error is the squared coefficient error against the held-out scores.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from ftrend.diffops import DifferenceOperator, Graph, chain_diff, graph_diff
from ftrend.errors import CoverageError, DimensionError
from ftrend.fhp import fit_fhp
from ftrend.ftf import AdmmConfig, fit_ftf
from ftrend.sftf import SftfConfig, fit_sftf

log = logging.getLogger(__name__)

METHODS = ("ftf", "fhp", "sftf")


def parse_grid(spec: str) -> np.ndarray:
    """Parse ``"min:max:count:log"`` or ``"min:max:count:lin"``.

    Endpoints are returned exactly as written.
    """
    parts = spec.split(":")
    if len(parts) != 4:
        raise ValueError(f"grid spec {spec!r} is not of the form min:max:count:log|lin")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ValueError(f"grid spec {spec!r}: {exc}") from None
    scale = parts[3].strip().lower()
    if n < 1:
        raise ValueError(f"grid spec {spec!r}: count must be at least 1")
    if scale not in ("log", "lin"):
        raise ValueError(f"grid spec {spec!r}: scale must be 'log' or 'lin'")
    if n == 1:
        if lo != hi:
            raise ValueError(f"grid spec {spec!r}: a single-point grid needs min == max")
        return np.array([lo])
    if scale == "log":
        if lo <= 0 or hi <= 0:
            raise ValueError(f"grid spec {spec!r}: log grids need positive endpoints")
        grid = np.logspace(np.log10(lo), np.log10(hi), n)
    else:
        grid = np.linspace(lo, hi, n)
    grid[0], grid[-1] = lo, hi
    return grid


def make_folds(T: int, K: int) -> list[np.ndarray]:
    """Interleaved folds of ``0..T-1``: fold ``j`` is ``j, j+K, ...``."""
    if K < 2 or K > T:
        raise ValueError(f"need 2 <= K <= T, got K={K}, T={T}")
    return [np.arange(j, T, K) for j in range(K)]


@dataclass
class CvPlan:
    K: int
    folds: list[np.ndarray]
    lam_grid: np.ndarray
    psi_grid: np.ndarray | None = None

    def __post_init__(self):
        self.lam_grid = _check_grid(self.lam_grid, "lambda")
        if self.psi_grid is not None:
            self.psi_grid = _check_grid(self.psi_grid, "psi")
        if len(self.folds) != self.K or any(len(f) == 0 for f in self.folds):
            raise ValueError("a plan needs K nonempty folds")
        allidx = np.sort(np.concatenate(self.folds))
        if not np.array_equal(allidx, np.arange(allidx.size)):
            raise ValueError("folds must partition 0..T-1")

    @classmethod
    def build(cls, T: int, K: int, lam_grid, psi_grid=None) -> "CvPlan":
        return cls(K, make_folds(T, K), np.asarray(lam_grid, dtype=float),
                   None if psi_grid is None else np.asarray(psi_grid, dtype=float))


def _check_grid(grid, name):
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise ValueError(f"{name} grid must be nonempty, positive and strictly increasing")
    return g


@dataclass
class CvResult:
    scores: np.ndarray
    best_lam: float
    best_psi: float | None
    lam_grid: np.ndarray
    psi_grid: np.ndarray | None
    nonconverged: np.ndarray = field(default=None)
    best_index: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class Structure:
    """How curves are linked: a chain of length ``N`` or a graph."""

    kind: Literal["chain", "graph"]
    k: int
    graph: Graph | None = None

    def operator(self, keep: np.ndarray) -> DifferenceOperator:
        if self.kind == "chain":
            return chain_diff(len(keep), self.k)
        return graph_diff(self.graph.induced(keep), self.k)

    def full_operator(self, N: int) -> DifferenceOperator:
        return self.operator(np.arange(N))

    def neighbor_map(self):
        return None if self.kind == "chain" else self.graph.neighbors()


def predict_heldout(B_train: np.ndarray, heldout: int, retained, neighbor_map=None) -> np.ndarray:
    """Predict the score row of a held-out curve from the fitted retained rows.

    ``retained`` lists the original indices of the rows of ``B_train`` in
    order.  Without a ``neighbor_map`` the curves form a chain: the result
    is the midpoint of the nearest retained rows on either side, or a copy
    of the only available side at a boundary.  With a ``neighbor_map``
    (adjacency lists over original indices) the result is the mean of the
    retained adjacent vertices.
    """
    retained = np.asarray(retained)
    B_train = np.asarray(B_train, dtype=float)
    if neighbor_map is None:
        pos = np.searchsorted(retained, heldout)
        below = pos - 1 if pos > 0 else None
        above = pos if pos < retained.size else None
        if below is None and above is None:
            raise CoverageError(f"no retained curves around index {heldout + 1}")
        if below is None:
            return B_train[above].copy()
        if above is None:
            return B_train[below].copy()
        return 0.5 * (B_train[below] + B_train[above])
    index = {int(v): p for p, v in enumerate(retained)}
    rows = [index[v] for v in neighbor_map[heldout] if v in index]
    if not rows:
        raise CoverageError(f"held-out vertex {heldout + 1} has no retained neighbour")
    return B_train[rows].mean(axis=0)


def _fit_path(method, Z, op, lam_grid, psi, template):
    """Fit every ``lam`` in order, warm-starting from the previous fit.

    Yields ``(coefficients, converged)``.
    """
    if method == "fhp":
        for lam in lam_grid:
            yield fit_fhp(Z, op, lam), True
        return
    warm = None
    prev_lam = None
    for lam in lam_grid:
        if method == "ftf":
            cfg = replace(template, lam=float(lam))
            res = fit_ftf(Z, op, cfg, warm=warm)
        else:
            cfg = replace(template, lam=float(lam), psi=float(psi))
            res = fit_sftf(Z, op, cfg, warm=warm)
        if res.multipliers is not None and res.multipliers.size:
            scale = 1.0 if prev_lam in (None, 0.0) else lam / prev_lam
            warm = (res.coefficients, res.aux, res.multipliers * scale)
        prev_lam = lam
        yield res.coefficients, res.converged


def _fold_errors(args):
    Z, structure, method, fold, lam_grid, psi_grid, template = args
    T = Z.shape[0]
    keep = np.setdiff1d(np.arange(T), fold)
    op = structure.operator(keep)
    nbrs = structure.neighbor_map()
    psis = [None] if psi_grid is None else list(psi_grid)
    sse = np.zeros((lam_grid.size, len(psis)))
    bad = np.zeros((lam_grid.size, len(psis)), dtype=bool)
    for j, psi in enumerate(psis):
        for i, (B, ok) in enumerate(_fit_path(method, Z[keep], op, lam_grid, psi, template)):
            pred = np.stack([predict_heldout(B, t, keep, nbrs) for t in fold])
            sse[i, j] = float(np.sum((pred - Z[fold]) ** 2))
            bad[i, j] = not ok
    return sse, bad


def default_template(method: str, adaptive_rho: bool = True, omega=None):
    if method == "sftf":
        return SftfConfig(lam=1.0, omega=omega, adaptive_rho=adaptive_rho)
    return AdmmConfig(lam=1.0, adaptive_rho=adaptive_rho)


def n_workers(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("FTREND_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# scores closer than this (relative to the minimum, or to the data scale)
# count as ties; rounding noise must not decide between equal fits
TIE_RTOL = 1e-10


def _argmin(scores: np.ndarray, usable: np.ndarray, scale: float = 0.0) -> tuple[int, int]:
    masked = np.where(usable, scores, np.inf)
    best = masked.min()
    if not np.isfinite(best):
        raise RuntimeError("no grid point produced a usable cross-validation score")
    hits = np.argwhere(masked <= best + TIE_RTOL * max(abs(best), scale))
    # ties go to more smoothing: largest lambda, then largest psi
    i, j = max(map(tuple, hits))
    return int(i), int(j)


def _scale(Z) -> float:
    # mean squared row norm: the size of a score for a useless prediction
    return float(np.mean(np.sum(Z * Z, axis=1)))


def cross_validate(
    Z,
    structure: Structure,
    method: str,
    plan: CvPlan,
    template=None,
    n_jobs: int | None = 1,
) -> CvResult:
    """Mean held-out squared coefficient error over the grid.

    ``template`` carries the solver settings; its ``lam`` / ``psi`` are
    overwritten per grid point.  Grid points at which every fold failed to
    converge are excluded from the argmin.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    Z = np.asarray(Z, dtype=float)
    if method == "sftf" and plan.psi_grid is None:
        raise ValueError("sftf cross-validation needs a psi grid")
    if method != "sftf" and plan.psi_grid is not None:
        raise ValueError("a psi grid only applies to sftf")
    if structure.kind == "graph" and structure.graph.n != Z.shape[0]:
        raise DimensionError(f"graph has {structure.graph.n} vertices, data has {Z.shape[0]} curves")
    if template is None:
        template = default_template(method)
    tasks = [(Z, structure, method, fold, plan.lam_grid, plan.psi_grid, template) for fold in plan.folds]
    workers = min(n_workers(n_jobs), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_fold_errors, tasks))
    else:
        parts = [_fold_errors(t) for t in tasks]
    sse = sum(p[0] for p in parts)
    bad = sum(p[1].astype(int) for p in parts)
    n_held = sum(len(f) for f in plan.folds)
    scores = sse / n_held
    usable = bad < len(plan.folds)
    i, j = _argmin(scores, usable, _scale(Z))
    if bad.any():
        log.warning("%d fold fits did not converge", int(bad.sum()))
    return CvResult(
        scores=scores,
        best_lam=float(plan.lam_grid[i]),
        best_psi=None if plan.psi_grid is None else float(plan.psi_grid[j]),
        lam_grid=plan.lam_grid,
        psi_grid=plan.psi_grid,
        nonconverged=bad,
        best_index=(i, j),
    )


def oracle_select(
    Z,
    truth,
    structure: Structure,
    method: str,
    lam_grid,
    psi_grid=None,
    template=None,
) -> CvResult:
    """Pick the grid point whose full-data fit is closest to known true scores.

    Scores are mean squared coefficient errors per curve, which differ from
    the curve-space MSE only by a constant for an orthonormal basis.
    """
    Z = np.asarray(Z, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if truth.shape != Z.shape:
        raise DimensionError(f"truth has shape {truth.shape}, data has {Z.shape}")
    lam_grid = _check_grid(lam_grid, "lambda")
    psi_grid = None if psi_grid is None else _check_grid(psi_grid, "psi")
    if template is None:
        template = default_template(method)
    op = structure.full_operator(Z.shape[0])
    psis = [None] if psi_grid is None else list(psi_grid)
    scores = np.zeros((lam_grid.size, len(psis)))
    bad = np.zeros_like(scores, dtype=int)
    for j, psi in enumerate(psis):
        for i, (B, ok) in enumerate(_fit_path(method, Z, op, lam_grid, psi, template)):
            scores[i, j] = float(np.sum((B - truth) ** 2)) / Z.shape[0]
            bad[i, j] = not ok
    i, j = _argmin(scores, np.ones_like(scores, dtype=bool), _scale(Z))
    return CvResult(scores, float(lam_grid[i]), None if psi_grid is None else float(psi_grid[j]),
                    lam_grid, psi_grid, bad, (i, j))
