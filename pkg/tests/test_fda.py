import math

import numpy as np
import pytest

from ftrend.errors import DimensionError
from ftrend.fda import BasisSystem, FunctionalDataset, Grid, fpca, inner_product, project, reconstruct


def quad_ip(f, g, w):
    # separate summation routine used as an oracle for project()
    return math.fsum(float(a) * float(b) * float(c) for a, b, c in zip(f, g, w))


def smooth_curves(rng, n, x, m=6):
    freq = np.arange(1, m + 1)
    coef = rng.normal(size=(n, m)) / freq
    return coef @ np.sin(np.outer(freq, np.pi * (x - x[0]) / (x[-1] - x[0])))


@pytest.fixture
def grid():
    return Grid.uniform(40, start=0.0, step=0.25)


class TestGrid:
    def test_uniform_weights_equal_step(self, grid):
        np.testing.assert_allclose(grid.weights, 0.25)

    def test_nonuniform_midpoint_spacing(self):
        g = Grid(np.array([0.0, 1.0, 3.0, 4.0]))
        np.testing.assert_allclose(g.weights, [1.0, 1.5, 1.5, 1.0])

    @pytest.mark.parametrize("pts", [[0.0], [0.0, 0.0, 1.0], [1.0, 0.5], [0.0, np.nan]])
    def test_invalid_points(self, pts):
        with pytest.raises(ValueError):
            Grid(np.array(pts))

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            Grid(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        with pytest.raises(DimensionError):
            Grid(np.array([0.0, 1.0]), np.array([1.0]))

    def test_equality(self):
        assert Grid.uniform(5) == Grid(np.arange(1.0, 6.0))
        assert Grid.uniform(5) != Grid.uniform(5, step=2.0)


class TestDataset:
    def test_validation(self, grid):
        with pytest.raises(ValueError):
            FunctionalDataset(grid, np.zeros((1, grid.H)))
        with pytest.raises(DimensionError):
            FunctionalDataset(grid, np.zeros((3, grid.H + 1)))
        bad = np.zeros((3, grid.H))
        bad[1, 2] = np.inf
        with pytest.raises(ValueError):
            FunctionalDataset(grid, bad)


class TestInnerProduct:
    def test_examples(self):
        g = Grid(np.arange(3.0), np.ones(3))
        assert inner_product(np.ones(3), np.ones(3), g) == 3.0
        g = Grid(np.arange(3.0), np.array([0.5, 1.0, 0.5]))
        assert inner_product(np.array([1.0, 2, 3]), np.array([1.0, 0, -1]), g) == -1.0

    def test_basis_row_has_unit_norm(self, rng, grid):
        basis = fpca(FunctionalDataset(grid, smooth_curves(rng, 10, grid.points)), 3)
        assert inner_product(basis.eval[1], basis.eval[1], grid) == pytest.approx(1.0, abs=1e-10)

    def test_shape_check(self, grid):
        with pytest.raises(DimensionError):
            inner_product(np.ones(3), np.ones(3), grid)


class TestBasisSystem:
    def test_rejects_non_orthonormal(self, grid):
        with pytest.raises(ValueError, match="orthonormal"):
            BasisSystem(np.ones((1, grid.H)), grid)

    def test_rejects_bad_proportions(self, grid):
        e = np.eye(2, grid.H) / np.sqrt(0.25)
        with pytest.raises(ValueError):
            BasisSystem(e, grid, np.array([0.2, 0.5]))
        with pytest.raises(ValueError):
            BasisSystem(e, grid, np.array([0.7, 0.6]))
        BasisSystem(e, grid, np.array([0.5, 0.5]))

    def test_subset(self, rng, grid):
        basis = fpca(FunctionalDataset(grid, smooth_curves(rng, 10, grid.points)), 4)
        sub = basis.subset([0, 2])
        assert sub.L == 2
        np.testing.assert_array_equal(sub.eval[1], basis.eval[2])


class TestProjection:
    @pytest.fixture
    def basis(self, rng, grid):
        return fpca(FunctionalDataset(grid, smooth_curves(rng, 20, grid.points)), 5)

    def test_basis_rows_project_to_unit_vectors(self, basis, grid):
        rows = np.vstack([basis.eval[0], 2 * basis.eval[0] + 3 * basis.eval[1]])
        Z = project(FunctionalDataset(grid, rows), basis)
        np.testing.assert_allclose(Z, [[1, 0, 0, 0, 0], [2, 3, 0, 0, 0]], atol=1e-10)

    def test_matches_independent_quadrature(self, rng, basis, grid):
        Y = smooth_curves(rng, 4, grid.points)
        Z = project(FunctionalDataset(grid, Y), basis)
        oracle = np.array([[quad_ip(y, phi, grid.weights) for phi in basis.eval] for y in Y])
        np.testing.assert_allclose(Z, oracle, atol=1e-10)

    def test_reconstruct_unit_score(self, basis):
        np.testing.assert_array_equal(reconstruct(np.eye(5)[:2], basis).values, basis.eval[:2])

    def test_round_trip_in_span(self, rng, basis, grid):
        C = rng.normal(size=(6, 5))
        Y = reconstruct(C, basis)
        np.testing.assert_allclose(project(Y, basis), C, atol=1e-10)
        np.testing.assert_allclose(reconstruct(project(Y, basis), basis).values, Y.values, atol=1e-8)
        energy = (Y.values**2 * grid.weights).sum(axis=1)
        np.testing.assert_allclose(energy, (C**2).sum(axis=1), atol=1e-8)

    def test_parseval_gap_outside_span(self, rng, basis, grid):
        y = rng.normal(size=(2, grid.H))
        data = FunctionalDataset(grid, y)
        Z = project(data, basis)
        resid = y - reconstruct(Z, basis).values
        lhs = (resid**2 * grid.weights).sum(axis=1)
        rhs = (y**2 * grid.weights).sum(axis=1) - (Z**2).sum(axis=1)
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_grid_mismatch(self, basis):
        other = FunctionalDataset(Grid.uniform(40), np.zeros((2, 40)))
        with pytest.raises(DimensionError):
            project(other, basis)
        with pytest.raises(DimensionError):
            reconstruct(np.zeros((2, 4)), basis)


class TestFpca:
    def test_rank_one_data(self, grid):
        c = np.sin(grid.points) + 2.0
        data = FunctionalDataset(grid, np.tile(c, (6, 1)))
        basis = fpca(data, 3)
        np.testing.assert_allclose(basis.variance_proportions, [1, 0, 0], atol=1e-12)
        phi = basis.eval[0]
        cn = c / np.sqrt(np.sum(c * c * grid.weights))
        np.testing.assert_allclose(phi, cn, atol=1e-10)

    def test_two_shapes_span(self, rng, grid):
        s1 = np.sin(np.pi * grid.points / grid.points[-1])
        s2 = np.cos(3 * np.pi * grid.points / grid.points[-1])
        W = rng.normal(size=(15, 2))
        basis = fpca(FunctionalDataset(grid, W @ np.vstack([s1, s2])), 2)
        for s in (s1, s2):
            z = basis.eval @ (s * grid.weights)
            resid = s - z @ basis.eval
            assert np.sqrt(np.sum(resid**2 * grid.weights) / np.sum(s**2 * grid.weights)) < 1e-6

    def test_orthonormal_and_sign_convention(self, rng, grid):
        basis = fpca(FunctionalDataset(grid, smooth_curves(rng, 25, grid.points)), 6)
        for i in range(6):
            for j in range(6):
                assert inner_product(basis.eval[i], basis.eval[j], grid) == pytest.approx(float(i == j), abs=1e-8)
            row = basis.eval[i]
            assert row[np.argmax(np.abs(row))] > 0
        assert np.all(np.diff(basis.variance_proportions) <= 0)

    def test_invariant_to_curve_order(self, rng, grid):
        Y = smooth_curves(rng, 12, grid.points)
        a = fpca(FunctionalDataset(grid, Y), 4)
        b = fpca(FunctionalDataset(grid, Y[rng.permutation(12)]), 4)
        np.testing.assert_allclose(a.eval, b.eval, atol=1e-8)
        np.testing.assert_allclose(a.variance_proportions, b.variance_proportions, atol=1e-12)

    def test_uncentered_keeps_mean(self, rng, grid):
        Y = smooth_curves(rng, 10, grid.points) * 0.1 + 5.0
        data = FunctionalDataset(grid, Y)
        unc = fpca(data, 2)
        cen = fpca(data, 2, centered=True)
        mean = Y.mean(axis=0)
        resid_unc = mean - project(FunctionalDataset(grid, np.vstack([mean, mean])), unc)[0] @ unc.eval
        resid_cen = mean - project(FunctionalDataset(grid, np.vstack([mean, mean])), cen)[0] @ cen.eval
        assert np.abs(resid_unc).max() < 0.05 * np.abs(mean).max()
        assert np.abs(resid_cen).max() > np.abs(resid_unc).max()

    def test_rank_policies(self, grid):
        data = FunctionalDataset(grid, np.tile(np.cos(grid.points), (4, 1)))
        assert fpca(data, 3).L == 3
        assert fpca(data, 3, rank_policy="reduce").L == 1
        with pytest.raises(DimensionError):
            fpca(data, 3, rank_policy="error")

    def test_too_many_components(self, grid):
        with pytest.raises(DimensionError):
            fpca(FunctionalDataset(grid, np.ones((3, grid.H))), 4)
