"""Factorized solves with ``I + c DᵀD`` for a difference operator ``D``."""

from __future__ import annotations

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import eigsh

from ftrend.diffops import DifferenceOperator


class ShiftedGramSolver:
    """Banded Cholesky factorization of ``M = I + c DᵀD``, reused across solves.

    Chain operators are already banded (half-bandwidth ``k + 1``).  Graph
    operators are reordered by reverse Cuthill-McKee when that shrinks the
    band.  ``perm`` and ``factor`` are exposed for the compiled kernels.
    """

    def __init__(self, op: DifferenceOperator, c: float):
        if c < 0:
            raise ValueError(f"shift scale must be nonnegative, got {c}")
        self.op = op
        self.c = float(c)
        N = op.N
        self._matrix = (sparse.identity(N, format="csr") + self.c * op.gram()).tocsr()
        perm = np.arange(N)
        if op.kind == "graph" and op.r and self.c > 0:
            rcm = reverse_cuthill_mckee(self._matrix, symmetric_mode=True).astype(np.int64)
            # keep the natural order unless reordering actually narrows the band
            if _half_bandwidth(self._matrix[rcm][:, rcm]) < _half_bandwidth(self._matrix):
                perm = rcm
        Mp = self._matrix[perm][:, perm].tocoo()
        u = _half_bandwidth(Mp)
        ab = np.zeros((u + 1, N))
        Mp = Mp.tocsr()
        for d in range(u + 1):
            ab[u - d, d:] = Mp.diagonal(d)
        # band of DᵀD alone, in the same layout, for refactoring at a new scale
        self.gram_band = ab.copy()
        self.gram_band[u] -= 1.0
        if self.c > 0:
            self.gram_band /= self.c
        try:
            self.factor = linalg.cholesky_banded(ab, lower=False)
        except linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"factorization of I + c DᵀD failed: {exc}") from exc
        self.perm = np.ascontiguousarray(perm, dtype=np.int64)
        self._inv = np.empty_like(self.perm)
        self._inv[self.perm] = np.arange(N)

    @property
    def matrix(self) -> sparse.csr_matrix:
        return self._matrix

    @property
    def bandwidth(self) -> int:
        return self.factor.shape[0] - 1

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = linalg.cho_solve_banded((self.factor, False), rhs[self.perm], check_finite=False)
        return x[self._inv]

    def matvec(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self._matrix @ X)

    def max_eigenvalue(self) -> float:
        """Largest eigenvalue of ``M``."""
        return 1.0 + self.c * gram_max_eigenvalue(self.op)


def _half_bandwidth(M) -> int:
    M = M.tocoo()
    return int(np.max(np.abs(M.row - M.col))) if M.nnz else 0


def gram_max_eigenvalue(op: DifferenceOperator) -> float:
    """Largest eigenvalue of ``DᵀD`` (dense for small ``N``, Lanczos otherwise)."""
    N = op.N
    if op.r == 0:
        return 0.0
    G = op.gram()
    if N <= 256:
        return float(linalg.eigvalsh(G.toarray(), subset_by_index=[N - 1, N - 1])[0])
    v0 = np.ones(N) / np.sqrt(N) + 1e-3 * np.cos(np.arange(N))
    return float(eigsh(G.astype(float), k=1, which="LA", v0=v0, tol=1e-10, return_eigenvectors=False)[0])
