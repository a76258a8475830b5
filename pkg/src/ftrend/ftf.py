"""Functional trend filtering in coefficient space, solved by ADMM.

Minimizes ``0.5 * ||Z - B||_F^2 + lam * sum_t ||D_t B||_2`` where ``D_t`` is
row ``t`` of a chain or graph difference operator.  The splitting introduces
``A = D B`` with scaled multipliers ``U``:

* ``B``-update: ``(I + rho DᵀD) B = Z - DᵀU + rho DᵀA`` (one factorization per fit)
* ``A``-update: row-wise group prox of ``D B + U / rho`` at threshold ``lam / rho``
* ``U``-update: ``U += rho (D B - A)``
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ftrend._linalg import ShiftedGramSolver
from ftrend.diffops import DifferenceOperator
from ftrend.errors import ConvergenceError, DimensionError
from ftrend._kernels import INEXACT
from ftrend.prox import col_soft_threshold, fista_group_min, row_soft_threshold


@dataclass
class AdmmConfig:
    """ADMM settings.

    ``eps0`` defaults to ``1e-6 * sqrt(N * L)`` and ``zero_tol`` to
    ``1e-6 * max_t ||D_t Z||`` when left as ``None``.  ``exact_prox=False``
    runs the FISTA loop for every row of the ``A``-update instead of the
    closed-form prox.  ``engine`` picks the compiled loop (``"compiled"``),
    the numpy reference loop (``"python"``) or lets ``exact_prox`` decide
    (``"auto"``: literal FISTA rows need the numpy loop).

    ``adaptive_rho`` enables residual balancing: ``rho`` doubles when the
    primal residual exceeds ten times the dual residual and halves in the
    opposite case.  The minimizer does not depend on ``rho``; only the
    iteration count does.
    """

    lam: float
    rho: float = 0.1
    eps0: float | None = None
    eps1: float = 1e-8
    max_outer: int = 10_000
    max_inner: int = 10_000
    zero_tol: float | None = None
    exact_prox: bool = True
    engine: str = "auto"
    adaptive_rho: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if (self.eps0 is not None and self.eps0 <= 0) or self.eps1 <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.engine not in ("auto", "compiled", "python"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.engine == "compiled" and not self.exact_prox:
            raise ValueError("the compiled engine only supports the closed-form prox")


@dataclass
class FitResult:
    coefficients: np.ndarray
    outer_iterations: int
    primal_residual_history: np.ndarray
    active_pattern: np.ndarray
    objective: float
    converged: bool = True
    selected_basis: np.ndarray | None = None
    aux: np.ndarray | None = field(default=None, repr=False)
    multipliers: np.ndarray | None = field(default=None, repr=False)

    def diagnostics(self) -> dict:
        out = {
            "converged": bool(self.converged),
            "iterations": int(self.outer_iterations),
            "objective": float(self.objective),
            "final_primal_residual": float(self.primal_residual_history[-1]) if self.primal_residual_history.size else 0.0,
            "active_pattern": [bool(x) for x in self.active_pattern],
        }
        if self.selected_basis is not None:
            out["selected_basis"] = [int(i) + 1 for i in np.flatnonzero(self.selected_basis)]
        return out


def _check(Z: np.ndarray, op: DifferenceOperator) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise DimensionError(f"coefficient matrix must be 2-d, got shape {Z.shape}")
    if Z.shape[0] != op.N:
        raise DimensionError(f"operator acts on {op.N} rows, coefficients have {Z.shape[0]}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("coefficients must be finite")
    return Z


def group_norms(M: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", M, M))


def objective(Z, B, op: DifferenceOperator, lam: float) -> float:
    """``0.5 * ||Z - B||_F^2 + lam * sum_t ||D_t B||_2``."""
    Z = np.asarray(Z, dtype=float)
    B = np.asarray(B, dtype=float)
    if Z.shape != B.shape:
        raise DimensionError(f"Z has shape {Z.shape}, B has shape {B.shape}")
    R = Z - B
    return 0.5 * float(np.sum(R * R)) + lam * float(group_norms(op.apply(B)).sum())


def b_update(Z, U, A, op: DifferenceOperator, rho: float, solver: ShiftedGramSolver | None = None) -> np.ndarray:
    """Minimize the augmented Lagrangian over ``B`` with ``A`` and ``U`` fixed."""
    if solver is None:
        solver = ShiftedGramSolver(op, rho)
    rhs = np.asarray(Z, dtype=float) - op.apply_t(np.asarray(U) - rho * np.asarray(A))
    return solver.solve(rhs)


def default_eps0(Z: np.ndarray) -> float:
    return 1e-6 * np.sqrt(Z.size)


def default_zero_tol(Z: np.ndarray, op: DifferenceOperator) -> float:
    if op.r == 0:
        return 0.0
    return 1e-6 * float(group_norms(op.apply(Z)).max())


def _a_update(C: np.ndarray, lam: float, rho: float, A_prev: np.ndarray, cfg) -> np.ndarray:
    if cfg.exact_prox:
        return row_soft_threshold(C, lam / rho)
    out = np.empty_like(C)
    for t in range(C.shape[0]):
        try:
            out[t] = fista_group_min(C[t], lam, rho, a0=A_prev[t], eps1=cfg.eps1, max_iter=cfg.max_inner)
        except ConvergenceError as exc:
            out[t] = exc.iterate
    return out


def _balance_rho(rho, primal_norm, dual_norm):
    if primal_norm > 10.0 * dual_norm:
        new = 2.0 * rho
    elif dual_norm > 10.0 * primal_norm:
        new = rho / 2.0
    else:
        return rho
    return new if 1e-6 <= new <= 1e6 else rho


def _admm_python(Z, op, cfg, b_step, B, A, U):
    lam, rho = cfg.lam, cfg.rho
    eps0 = default_eps0(Z) if cfg.eps0 is None else cfg.eps0
    history = []
    converged = False
    inner_tol = np.inf
    v = 0
    for v in range(1, cfg.max_outer + 1):
        rhs = Z - op.apply_t(U - rho * A)
        B_new = b_step(rhs, B, rho, inner_tol)
        DB = op.apply(B_new)
        A_old = A
        A = _a_update(DB + U / rho, lam, rho, A, cfg)
        R = DB - A
        U += rho * R
        dB = B_new - B
        change = float(np.sqrt(np.einsum("ij,ij->j", dB, dB)).sum())
        primal = float(group_norms(R).max()) if R.size else 0.0
        history.append(primal)
        B = B_new
        inner_tol = INEXACT * change
        if change < eps0 and primal <= eps0:
            converged = True
            break
        if cfg.adaptive_rho:
            rho = _balance_rho(rho, np.linalg.norm(R), rho * np.linalg.norm(op.apply_t(A - A_old)))
    return B, A, U, v, np.asarray(history), converged


def admm(Z, op, cfg, solver, warm=None, group_thresh=None, lip=None, eps2=1e-8, max_inner=10_000):
    """Shared outer loop for the plain and sparse solvers.

    With ``group_thresh`` (one value per column) the ``B``-update becomes a
    group-lasso problem solved by FISTA with step ``1 / lip``, stopped at
    ``max(eps2, INEXACT * last outer change)``; otherwise it is the linear
    solve.  Returns ``(B, A, U, iterations, history, converged)``.
    """
    if warm is not None:
        B, A, U = (np.array(x, dtype=float, copy=True) for x in warm)
    else:
        B = Z.copy()
        A = op.apply(Z)
        U = np.zeros_like(A)
    sparse_b = group_thresh is not None
    engine = cfg.engine
    if engine == "auto":
        engine = "compiled" if cfg.exact_prox else "python"
    if engine == "python":
        solvers = {cfg.rho: solver}

        def system(rho):
            if rho not in solvers:
                solvers[rho] = ShiftedGramSolver(op, rho)
            return solvers[rho]

        if sparse_b:
            mu = (lip - 1.0) / cfg.rho

            def b_step(rhs, B_prev, rho, inner_tol):
                return group_lasso_fista_np(
                    system(rho), rhs, B_prev, group_thresh, 1.0 + rho * mu, max(eps2, inner_tol), max_inner
                )
        else:
            def b_step(rhs, _, rho, inner_tol):
                return system(rho).solve(rhs)
        return _admm_python(Z, op, cfg, b_step, B, A, U)

    from ftrend import _kernels

    eps0 = default_eps0(Z) if cfg.eps0 is None else cfg.eps0
    m = op.matrix
    hist = np.zeros(cfg.max_outer)
    thresh = np.zeros(Z.shape[1]) if group_thresh is None else np.asarray(group_thresh, dtype=float)
    mu_max = (lip - 1.0) / cfg.rho if sparse_b else 0.0
    iters, conv, _ = _kernels.admm_loop(
        np.ascontiguousarray(Z), m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data,
        solver.factor.copy(), solver.perm, float(cfg.lam), float(cfg.rho), float(eps0), int(cfg.max_outer),
        B, A, U, hist, sparse_b, thresh, float(lip or 1.0), float(eps2), int(max_inner),
        solver.gram_band, float(mu_max), bool(cfg.adaptive_rho),
    )
    return B, A, U, int(iters), hist[:iters].copy(), bool(conv)


def group_lasso_fista_np(solver, rhs, B0, thresh, lip, eps2, max_inner):
    """Reference FISTA for ``min 0.5 bᵀMb - rhsᵀb + sum_l thresh[l] ||b_l||``."""
    step = 1.0 / lip
    w = B0.copy()
    y = B0.copy()
    s = 1.0
    for _ in range(max_inner):
        w_new = col_soft_threshold(y - step * (solver.matvec(y) - rhs), step * thresh)
        move = np.sqrt(np.einsum("ij,ij->j", w_new - w, w_new - w)).max()
        if np.sum((y - w_new) * (w_new - w)) > 0:
            s_new = 1.0
            y = w_new
        else:
            s_new = (1.0 + np.sqrt(1.0 + 4.0 * s * s)) / 2.0
            y = w_new + (s - 1.0) / s_new * (w_new - w)
        s = s_new
        w = w_new
        if move < eps2:
            break
    return w


def fit_ftf(Z, op: DifferenceOperator, cfg: AdmmConfig, warm=None) -> FitResult:
    """Functional trend filtering on score matrix ``Z`` (rows = curves).

    ``warm`` optionally supplies a ``(B, A, U)`` starting point, e.g. the
    state of a fit at a neighbouring ``lam``.
    """
    Z = _check(Z, op)
    tol = default_zero_tol(Z, op) if cfg.zero_tol is None else cfg.zero_tol
    if op.r == 0 or cfg.lam == 0.0:
        B = Z.copy()
        A = op.apply(B)
        return FitResult(
            B, 0, np.zeros(0), group_norms(A) > tol, objective(Z, B, op, cfg.lam),
            aux=A, multipliers=np.zeros_like(A),
        )
    solver = ShiftedGramSolver(op, cfg.rho)
    B, A, U, iters, hist, conv = admm(Z, op, cfg, solver, warm=warm)
    return FitResult(
        coefficients=B,
        outer_iterations=iters,
        primal_residual_history=hist,
        active_pattern=group_norms(op.apply(B)) > tol,
        objective=objective(Z, B, op, cfg.lam),
        converged=conv,
        aux=A,
        multipliers=U,
    )


def lambda_max(Z, op: DifferenceOperator) -> float:
    """Smallest ``lam`` at which the fit lies in the null space of ``D``.

    Computed from the dual certificate ``Dᵀ V = Z - P Z`` where ``P`` projects
    onto ``null(D)``; the threshold is ``max_t ||V_t||`` (exact when ``D`` has
    full row rank, as for chains).
    """
    Z = _check(Z, op)
    Dd = op.toarray()
    V, *_ = np.linalg.lstsq(Dd.T, Z, rcond=None)
    return float(group_norms(V).max()) if V.size else 0.0
