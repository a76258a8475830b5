"""Compiled inner loops for the ADMM solvers.

Operators are passed in CSR form, the system ``I + rho DᵀD`` as an upper
banded Cholesky factor in LAPACK layout together with a symmetric
permutation.  Everything here mirrors the reference loop in
:func:`ftrend.ftf.admm` and is tested against it.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# inner FISTA tolerance relative to the last outer change of B
INEXACT = 0.01


@njit(cache=True)
def csr_apply(indptr, indices, data, X, out):
    r = indptr.size - 1
    L = X.shape[1]
    for i in range(r):
        for l in range(L):
            out[i, l] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            d = data[p]
            for l in range(L):
                out[i, l] += d * X[j, l]


@njit(cache=True)
def csr_apply_t(indptr, indices, data, V, out):
    r = indptr.size - 1
    L = V.shape[1]
    out[:, :] = 0.0
    for i in range(r):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            d = data[p]
            for l in range(L):
                out[j, l] += d * V[i, l]


@njit(cache=True)
def band_cholesky(gb, rho, cb):
    """Upper band Cholesky factor of ``I + rho G`` with ``G`` given in band layout ``gb``."""
    u = gb.shape[0] - 1
    N = gb.shape[1]
    for j in range(N):
        lo = max(0, j - u)
        for i in range(lo, j + 1):
            s = rho * gb[u + i - j, j]
            if i == j:
                s += 1.0
            for p in range(max(lo, i - u), i):
                s -= cb[u + p - i, i] * cb[u + p - j, j]
            if i < j:
                cb[u + i - j, j] = s / cb[u, i]
            else:
                cb[u, j] = np.sqrt(s)


@njit(cache=True)
def band_solve(cb, perm, rhs, out, work):
    """Solve ``M x = rhs`` with ``P M Pᵀ = UᵀU``; ``cb`` holds ``U`` in upper band layout."""
    u = cb.shape[0] - 1
    N, L = rhs.shape
    for i in range(N):
        for l in range(L):
            work[i, l] = rhs[perm[i], l]
    # Uᵀ y = b
    for j in range(N):
        lo = max(0, j - u)
        for l in range(L):
            s = work[j, l]
            for i in range(lo, j):
                s -= cb[u + i - j, j] * work[i, l]
            work[j, l] = s / cb[u, j]
    # U x = y
    for i in range(N - 1, -1, -1):
        hi = min(N - 1, i + u)
        for l in range(L):
            s = work[i, l]
            for j in range(i + 1, hi + 1):
                s -= cb[u + i - j, j] * work[j, l]
            work[i, l] = s / cb[u, i]
    for i in range(N):
        for l in range(L):
            out[perm[i], l] = work[i, l]


@njit(cache=True)
def _shifted_matvec(indptr, indices, data, rho, W, tmp_r, out):
    # out = W + rho * Dᵀ D W
    csr_apply(indptr, indices, data, W, tmp_r)
    csr_apply_t(indptr, indices, data, tmp_r, out)
    N, L = W.shape
    for i in range(N):
        for l in range(L):
            out[i, l] = W[i, l] + rho * out[i, l]


@njit(cache=True)
def group_lasso_fista(indptr, indices, data, rho, rhs, B0, thresh, lip, eps2, max_inner, out):
    """FISTA for ``min 0.5 bᵀMb - rhsᵀb + sum_l thresh[l] ||b_l||`` column-wise.

    ``M = I + rho DᵀD`` with gradient Lipschitz constant ``lip``.  Uses
    gradient-based momentum restart.  Returns the number of iterations.
    """
    N, L = rhs.shape
    r = indptr.size - 1
    step = 1.0 / lip
    w = B0.copy()
    y = B0.copy()
    g = np.empty_like(B0)
    w_new = np.empty_like(B0)
    tmp_r = np.empty((r, L))
    s = 1.0
    it = 0
    for it in range(1, max_inner + 1):
        _shifted_matvec(indptr, indices, data, rho, y, tmp_r, g)
        for i in range(N):
            for l in range(L):
                w_new[i, l] = y[i, l] - step * (g[i, l] - rhs[i, l])
        for l in range(L):
            nrm = 0.0
            for i in range(N):
                nrm += w_new[i, l] ** 2
            nrm = np.sqrt(nrm)
            tau = thresh[l] * step
            f = 1.0 - tau / nrm if nrm > tau else 0.0
            for i in range(N):
                w_new[i, l] *= f
        move = 0.0
        inner = 0.0
        for l in range(L):
            ml = 0.0
            for i in range(N):
                d = w_new[i, l] - w[i, l]
                ml += d * d
                inner += (y[i, l] - w_new[i, l]) * d
            ml = np.sqrt(ml)
            if ml > move:
                move = ml
        if inner > 0.0:
            s_new = 1.0
            for i in range(N):
                for l in range(L):
                    y[i, l] = w_new[i, l]
        else:
            s_new = (1.0 + np.sqrt(1.0 + 4.0 * s * s)) / 2.0
            c = (s - 1.0) / s_new
            for i in range(N):
                for l in range(L):
                    y[i, l] = w_new[i, l] + c * (w_new[i, l] - w[i, l])
        s = s_new
        for i in range(N):
            for l in range(L):
                w[i, l] = w_new[i, l]
        if move < eps2:
            break
    out[:, :] = w
    return it


@njit(cache=True)
def admm_loop(
    Z, indptr, indices, data, cb, perm, lam, rho, eps0, max_outer,
    B, A, U, hist, sparse_b, thresh, lip, eps2, max_inner,
    gb, mu_max, adaptive,
):
    """Run ADMM in place on ``B``, ``A``, ``U``.

    ``U`` holds unscaled multipliers, so ``rho`` may change between sweeps
    (residual balancing when ``adaptive``): the factor ``cb`` is then rebuilt
    from the band of ``DᵀD`` in ``gb`` and the FISTA Lipschitz constant
    becomes ``1 + rho * mu_max``.  The inner FISTA solve of the sparse
    ``B``-update stops at ``max(eps2, INEXACT * last outer change)``.
    Returns ``(iterations, converged, rho)``.
    """
    N, L = Z.shape
    r = indptr.size - 1
    tmp_r = np.empty((r, L))
    DB = np.empty((r, L))
    A_old = np.empty((r, L))
    rhs = np.empty((N, L))
    dual = np.empty((N, L))
    B_new = np.empty((N, L))
    work = np.empty((N, L))
    inner_tol = np.inf
    for v in range(max_outer):
        tau = lam / rho
        for t in range(r):
            for l in range(L):
                tmp_r[t, l] = U[t, l] - rho * A[t, l]
                A_old[t, l] = A[t, l]
        csr_apply_t(indptr, indices, data, tmp_r, rhs)
        for i in range(N):
            for l in range(L):
                rhs[i, l] = Z[i, l] - rhs[i, l]
        if sparse_b:
            group_lasso_fista(indptr, indices, data, rho, rhs, B, thresh, lip, max(eps2, inner_tol), max_inner, B_new)
        else:
            band_solve(cb, perm, rhs, B_new, work)
        csr_apply(indptr, indices, data, B_new, DB)
        primal = 0.0
        primal_fro = 0.0
        for t in range(r):
            nrm = 0.0
            for l in range(L):
                c = DB[t, l] + U[t, l] / rho
                tmp_r[t, l] = c
                nrm += c * c
            nrm = np.sqrt(nrm)
            f = 1.0 - tau / nrm if nrm > tau else 0.0
            res = 0.0
            for l in range(L):
                a = f * tmp_r[t, l]
                A[t, l] = a
                d = DB[t, l] - a
                U[t, l] += rho * d
                res += d * d
            primal_fro += res
            res = np.sqrt(res)
            if res > primal:
                primal = res
        change = 0.0
        for l in range(L):
            cl = 0.0
            for i in range(N):
                d = B_new[i, l] - B[i, l]
                cl += d * d
                B[i, l] = B_new[i, l]
            change += np.sqrt(cl)
        hist[v] = primal
        inner_tol = INEXACT * change
        if change < eps0 and primal <= eps0:
            return v + 1, True, rho
        if adaptive:
            for t in range(r):
                for l in range(L):
                    tmp_r[t, l] = A[t, l] - A_old[t, l]
            csr_apply_t(indptr, indices, data, tmp_r, dual)
            dual_fro = 0.0
            for i in range(N):
                for l in range(L):
                    dual_fro += dual[i, l] ** 2
            dual_norm = rho * np.sqrt(dual_fro)
            primal_norm = np.sqrt(primal_fro)
            new_rho = rho
            if primal_norm > 10.0 * dual_norm:
                new_rho = rho * 2.0
            elif dual_norm > 10.0 * primal_norm:
                new_rho = rho / 2.0
            if new_rho != rho and 1e-6 <= new_rho <= 1e6:
                rho = new_rho
                band_cholesky(gb, rho, cb)
                lip = 1.0 + rho * mu_max
    return max_outer, False, rho
