"""Simulation scenarios, MSE and the benchmark harness.

Four trend scenarios over ``t = 1..T`` on the grid ``x = 1..H``, built from
Gaussian-process sample paths ``f1..f5`` with RBF kernels:

1. constant: ``f1(x)``
2. smooth: ``f1(x) sin((t + x) / 5)``
3. piecewise constant: ``f1..f5`` on consecutive blocks of 10 curves
4. varying smoothness: ``f1(x) + 20 {sin(4t/T - 2) + 2 exp(-30 (4t/T - 2)^2)}``

Observations add i.i.d. ``N(0, sigma^2)`` noise at every grid point.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from ftrend.errors import DimensionError
from ftrend.fda import FunctionalDataset, Grid, fpca, project, reconstruct
from ftrend.fhp import fit_fhp
from ftrend.ftf import AdmmConfig, fit_ftf
from ftrend.select import CvPlan, Structure, cross_validate, n_workers, parse_grid
from ftrend.sftf import SftfConfig, default_weights, fit_sftf

log = logging.getLogger(__name__)

DEFAULT_THETA = (30.0, 20.0, 35.0, 25.0, 30.0)
BENCH_METHODS = ("ftf", "fhp", "sftf", "fpc")


def rbf_kernel(x1, x2, theta: float):
    """``theta^2 exp(-(x1 - x2)^2 / (2 theta^2))``; broadcasts over arrays."""
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    d = np.subtract(x1, x2, dtype=float)
    return theta**2 * np.exp(-(d * d) / (2.0 * theta**2))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gp_sample(grid: Grid, theta: float, seed=None, size: int | None = None) -> np.ndarray:
    """One (or ``size``) draws from ``N(0, K)`` with ``K`` the RBF Gram matrix on the grid.

    The Gram matrix is numerically singular on fine grids, so a diagonal
    jitter starting at ``1e-10 theta^2`` is added and raised tenfold until
    the Cholesky factorization succeeds (at most ``1e-4 theta^2``).
    """
    x = grid.points
    K = rbf_kernel(x[:, None], x[None, :], theta)
    jitter = 1e-10 * theta**2
    while True:
        try:
            chol = linalg.cholesky(K + jitter * np.eye(x.size), lower=True)
            break
        except linalg.LinAlgError:
            jitter *= 10.0
            if jitter > 1e-4 * theta**2 * (1 + 1e-9):
                raise np.linalg.LinAlgError(f"RBF Gram matrix (theta={theta}) not factorizable with jitter up to 1e-4 theta^2")
    rng = _rng(seed)
    if size is None:
        return chol @ rng.standard_normal(x.size)
    return rng.standard_normal((size, x.size)) @ chol.T


@dataclass
class ScenarioSpec:
    scenario: int
    sigma: float
    T: int = 50
    H: int = 120
    theta: tuple = DEFAULT_THETA
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if self.scenario not in (1, 2, 3, 4):
            raise ValueError(f"scenario must be 1, 2, 3 or 4, got {self.scenario}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.T < 2 or self.H < 2:
            raise ValueError("T and H must be at least 2")
        if len(self.theta) != 5 or any(th <= 0 for th in self.theta):
            raise ValueError("theta must hold five positive kernel scales")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")

    def grid(self) -> Grid:
        return Grid.uniform(self.H)


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent stream for replication ``rep``, reproducible in isolation."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def true_trend(scenario: int, fs: np.ndarray, T: int, x: np.ndarray) -> np.ndarray:
    t = np.arange(1, T + 1, dtype=float)[:, None]
    f1 = fs[0][None, :]
    if scenario == 1:
        return np.repeat(f1, T, axis=0)
    if scenario == 2:
        return f1 * np.sin((t + x[None, :]) / 5.0)
    if scenario == 3:
        block = np.minimum((np.arange(T) // 10), 4)
        return fs[block]
    if scenario == 4:
        s = 4.0 * t / T - 2.0
        return f1 + 20.0 * (np.sin(s) + 2.0 * np.exp(-30.0 * s**2))
    raise ValueError(f"scenario must be 1, 2, 3 or 4, got {scenario}")


def make_scenario(spec: ScenarioSpec, rep: int = 0) -> tuple[FunctionalDataset, FunctionalDataset]:
    """``(truth, noisy)`` for replication ``rep`` of ``spec``; deterministic."""
    rng = replication_rng(spec.seed, rep)
    grid = spec.grid()
    fs = np.stack([gp_sample(grid, th, rng) for th in spec.theta])
    truth = true_trend(spec.scenario, fs, spec.T, grid.points)
    noisy = truth + spec.sigma * rng.standard_normal(truth.shape) if spec.sigma > 0 else truth.copy()
    return FunctionalDataset(grid, truth), FunctionalDataset(grid, noisy)


def mse(estimate, truth) -> float:
    """Mean squared pointwise difference over all curves and grid points."""
    a = estimate.values if isinstance(estimate, FunctionalDataset) else np.asarray(estimate, dtype=float)
    b = truth.values if isinstance(truth, FunctionalDataset) else np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"estimate has shape {a.shape}, truth has {b.shape}")
    return float(np.mean((a - b) ** 2))


@dataclass
class BenchSettings:
    """Tuning setup shared by all replications of a benchmark run."""

    methods: tuple = (("ftf", 0), ("fhp", 0))
    L: int = 5
    lam_grid: np.ndarray = field(default_factory=lambda: parse_grid("1e-3:1e3:60:log"))
    psi_grid: np.ndarray = field(default_factory=lambda: parse_grid("1e-1:1e1:20:log"))
    folds: int = 10
    adaptive_rho: bool = True
    centered: bool = False


def _run_replication(args):
    spec, settings, rep = args
    truth, noisy = make_scenario(spec, rep)
    basis = fpca(noisy, settings.L, centered=settings.centered)
    Z = project(noisy, basis)
    T = Z.shape[0]
    out = {}
    for method, k in settings.methods:
        key = (method, k)
        try:
            if method == "fpc":
                out[key] = (mse(reconstruct(Z, basis), truth), None)
                continue
            structure = Structure("chain", k)
            op = structure.full_operator(T)
            if method == "sftf":
                template = SftfConfig(lam=1.0, omega=default_weights(basis), adaptive_rho=settings.adaptive_rho)
                plan = CvPlan.build(T, settings.folds, settings.lam_grid, settings.psi_grid)
            else:
                template = AdmmConfig(lam=1.0, adaptive_rho=settings.adaptive_rho)
                plan = CvPlan.build(T, settings.folds, settings.lam_grid)
            cv = cross_validate(Z, structure, method, plan, template, n_jobs=1)
            nbasis = None
            if method == "fhp":
                B = fit_fhp(Z, op, cv.best_lam)
            elif method == "ftf":
                B = fit_ftf(Z, op, replace(template, lam=cv.best_lam)).coefficients
            else:
                res = fit_sftf(Z, op, replace(template, lam=cv.best_lam, psi=cv.best_psi))
                B = res.coefficients
                nbasis = int(res.selected_basis.sum())
            out[key] = (mse(reconstruct(B, basis), truth), nbasis)
        except Exception as exc:  # one failed replication must not sink the table
            log.warning("replication %d, %s k=%s failed: %s", rep, method, k, exc)
            out[key] = None
    return out


@dataclass
class BenchmarkTable:
    rows: list
    provenance: dict = field(default_factory=dict)

    COLUMNS = ("scenario", "sigma", "method", "k", "mean_mse", "se_mse", "mean_nbasis", "reps")

    def row(self, method: str, k=None) -> dict:
        for r in self.rows:
            if r["method"] == method and (k is None or r["k"] == k):
                return r
        raise KeyError((method, k))

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join(_fmt(r[c]) for c in self.COLUMNS))
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {"provenance": self.provenance, "rows": self.rows}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_benchmark(spec: ScenarioSpec, settings: BenchSettings, n_jobs: int | None = None) -> BenchmarkTable:
    """Simulate, fit and score every method over ``spec.replications`` runs.

    Each replication estimates its own FPCA basis from the noisy curves,
    selects tuning weights by interleaved K-fold CV, refits on all curves and
    scores the reconstruction against the truth.
    """
    for method, _ in settings.methods:
        if method not in BENCH_METHODS:
            raise ValueError(f"unknown benchmark method {method!r}; choose from {BENCH_METHODS}")
    tasks = [(spec, settings, r) for r in range(spec.replications)]
    workers = min(n_workers(n_jobs), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_replication, tasks))
    else:
        results = [_run_replication(t) for t in tasks]
    rows = []
    failures = 0
    for method, k in settings.methods:
        vals = [res[(method, k)] for res in results if res[(method, k)] is not None]
        failures += len(results) - len(vals)
        errs = np.array([v[0] for v in vals])
        n = errs.size
        nb = [v[1] for v in vals if v[1] is not None]
        rows.append({
            "scenario": spec.scenario,
            "sigma": float(spec.sigma),
            "method": method,
            "k": None if method == "fpc" else int(k),
            "mean_mse": math.fsum(errs) / n if n else float("nan"),
            "se_mse": float(np.std(errs, ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
            "mean_nbasis": math.fsum(nb) / len(nb) if nb else None,
            "reps": int(n),
        })
    if failures:
        warnings.warn(f"{failures} method fits failed and were excluded", RuntimeWarning, stacklevel=2)
    return BenchmarkTable(rows)
