"""Sparse functional trend filtering.

Adds a group-lasso penalty ``psi * sum_l omega_l ||b_l||`` over the score
columns, so whole basis functions drop out of the fit.  The ADMM loop is the
one used by :func:`ftrend.ftf.fit_ftf`; only the ``B``-update changes, from a
linear solve to a FISTA proximal-gradient loop on

    0.5 bᵀ(I + rho DᵀD)b - rhsᵀb + psi * omega_l * ||b||

with step ``1 / L_b`` where ``L_b`` is the largest eigenvalue of
``I + rho DᵀD``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ftrend._linalg import ShiftedGramSolver
from ftrend.diffops import DifferenceOperator
from ftrend.fda import BasisSystem
from ftrend.ftf import AdmmConfig, FitResult, _check, admm, default_zero_tol, group_norms, objective


@dataclass
class SftfConfig(AdmmConfig):
    """ADMM settings plus the basis-sparsity weight ``psi`` and weights ``omega``.

    ``omega=None`` means unit weights.  ``basis_zero_tol`` defaults to
    ``1e-6 * max_l ||z_l||``.
    """

    psi: float = 0.0
    omega: np.ndarray | None = None
    eps2: float = 1e-8
    basis_zero_tol: float | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.psi < 0:
            raise ValueError(f"psi must be nonnegative, got {self.psi}")
        if not self.exact_prox:
            raise ValueError("the sparse solver uses the closed-form prox for the A-update")
        if self.omega is not None:
            w = np.asarray(self.omega, dtype=float).ravel()
            if np.any(~np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("omega must be positive and finite")
            self.omega = w
        if self.eps2 <= 0:
            raise ValueError("eps2 must be positive")


def default_weights(basis: BasisSystem) -> np.ndarray:
    """Inverse variance proportions of an FPCA basis."""
    p = basis.variance_proportions
    if p is None:
        raise ValueError("basis carries no variance proportions; pass omega explicitly")
    zero = np.flatnonzero(p <= 0)
    if zero.size:
        comps = ", ".join(str(i + 1) for i in zero)
        raise ValueError(f"component(s) {comps} explain no variance; drop them from the basis before fitting")
    return 1.0 / p


def sftf_objective(Z, B, op: DifferenceOperator, lam: float, psi: float, omega) -> float:
    B = np.asarray(B, dtype=float)
    omega = np.ones(B.shape[1]) if omega is None else np.asarray(omega, dtype=float)
    col = np.sqrt(np.einsum("ij,ij->j", B, B))
    return objective(Z, B, op, lam) + psi * float(omega @ col)


def fit_sftf(Z, op: DifferenceOperator, cfg: SftfConfig, warm=None) -> FitResult:
    """Sparse functional trend filtering on score matrix ``Z``.

    ``selected_basis[l]`` marks the columns whose fitted norm exceeds the
    basis zero tolerance.
    """
    Z = _check(Z, op)
    L = Z.shape[1]
    omega = np.ones(L) if cfg.omega is None else cfg.omega
    if omega.size != L:
        raise ValueError(f"omega has {omega.size} entries for {L} columns")
    solver = ShiftedGramSolver(op, cfg.rho)
    lip = solver.max_eigenvalue()
    B, A, U, iters, hist, conv = admm(
        Z, op, cfg, solver, warm=warm,
        group_thresh=cfg.psi * omega, lip=lip, eps2=cfg.eps2, max_inner=cfg.max_inner,
    )
    tol = default_zero_tol(Z, op) if cfg.zero_tol is None else cfg.zero_tol
    btol = cfg.basis_zero_tol
    if btol is None:
        btol = 1e-6 * float(np.sqrt(np.einsum("ij,ij->j", Z, Z)).max())
    col = np.sqrt(np.einsum("ij,ij->j", B, B))
    return FitResult(
        coefficients=B,
        outer_iterations=iters,
        primal_residual_history=hist,
        active_pattern=group_norms(op.apply(B)) > tol if op.r else np.zeros(0, dtype=bool),
        objective=sftf_objective(Z, B, op, cfg.lam, cfg.psi, omega),
        converged=conv,
        selected_basis=col > btol,
        aux=A,
        multipliers=U,
    )
