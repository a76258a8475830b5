import numpy as np
import pytest

from ftrend.diffops import Graph, chain_diff, graph_diff
from ftrend.fhp import fhp_objective, fit_fhp

from conftest import random_graph


class TestFhp:
    def test_zero_lambda(self, rng):
        Z = rng.normal(size=(6, 3))
        np.testing.assert_allclose(fit_fhp(Z, chain_diff(6, 1), 0.0), Z, atol=1e-14)

    def test_two_by_two(self):
        B = fit_fhp(np.array([[0.0], [4.0]]), chain_diff(2, 0), 1.0)
        np.testing.assert_allclose(B.ravel(), [1.6, 2.4], atol=1e-14)

    @pytest.mark.parametrize("k", [0, 1, 2])
    @pytest.mark.parametrize("T", [5, 60, 500])
    def test_solves_linear_system(self, rng, T, k):
        Z = rng.normal(size=(T, 3))
        op = chain_diff(T, k)
        lam = 3.7
        B = fit_fhp(Z, op, lam)
        M = np.eye(T) + 2 * lam * op.gram().toarray()
        assert np.linalg.norm(M @ B - Z) <= 1e-10 * np.linalg.norm(Z)

    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_null_space_limit(self, rng, k):
        T = 40
        Z = rng.normal(size=(T, 2))
        op = chain_diff(T, k)
        B = fit_fhp(Z, op, 1e8)
        t = np.arange(T, dtype=float)
        P = np.vander(t / T, k + 1)
        proj = P @ np.linalg.lstsq(P, Z, rcond=None)[0]
        assert np.abs(B - proj).max() <= 1e-4 * np.abs(Z).max()
        if k == 0:
            np.testing.assert_allclose(B, np.tile(Z.mean(axis=0), (T, 1)), atol=1e-4)

    def test_linearity(self, rng):
        op = chain_diff(30, 1)
        Z1, Z2 = rng.normal(size=(2, 30, 2))
        np.testing.assert_allclose(fit_fhp(Z1 + Z2, op, 2.0), fit_fhp(Z1, op, 2.0) + fit_fhp(Z2, op, 2.0), atol=1e-12)

    def test_shrinkage(self, rng):
        op = chain_diff(30, 2)
        Z = rng.normal(size=(30, 2))
        norms = [np.linalg.norm(op.apply(fit_fhp(Z, op, lam))) for lam in (0.1, 1, 10, 100)]
        assert np.all(np.diff(norms) <= 0)

    def test_beats_perturbations(self, rng):
        op = chain_diff(15, 1)
        Z = rng.normal(size=(15, 3))
        B = fit_fhp(Z, op, 0.8)
        f0 = fhp_objective(Z, B, op, 0.8)
        for _ in range(200):
            assert f0 <= fhp_objective(Z, B + 1e-2 * rng.normal(size=B.shape), op, 0.8)

    def test_graph(self, rng):
        g = random_graph(rng, 12)
        op = graph_diff(g, 1)
        Z = rng.normal(size=(12, 2))
        B = fit_fhp(Z, op, 0.5)
        M = np.eye(12) + op.gram().toarray()
        np.testing.assert_allclose(M @ B, Z, atol=1e-10)
        np.testing.assert_allclose(fit_fhp(Z, graph_diff(Graph.path(12), 0), 0.5),
                                   fit_fhp(Z, chain_diff(12, 0), 0.5), atol=1e-12)
