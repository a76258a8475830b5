"""Functional HP filter: squared-difference penalty with a closed-form fit.

Each score column solves ``(I + 2 lam DᵀD) b = z``; one factorization serves
all columns.
"""

from __future__ import annotations

import numpy as np

from ftrend._linalg import ShiftedGramSolver
from ftrend.diffops import DifferenceOperator
from ftrend.errors import DimensionError


def fit_fhp(Z, op: DifferenceOperator, lam: float) -> np.ndarray:
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != op.N:
        raise DimensionError(f"operator acts on {op.N} rows, coefficients have shape {Z.shape}")
    return ShiftedGramSolver(op, 2.0 * lam).solve(Z)


def fhp_objective(Z, B, op: DifferenceOperator, lam: float) -> float:
    """``0.5 * ||Z - B||_F^2 + lam * ||D B||_F^2``."""
    R = np.asarray(Z) - np.asarray(B)
    DB = op.apply(np.asarray(B, dtype=float))
    return 0.5 * float(np.sum(R * R)) + lam * float(np.sum(DB * DB))
