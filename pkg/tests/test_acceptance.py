"""End-to-end acceptance checks, one test per criterion.

Each test enforces its stated tolerance and runtime budget.  A summary
line per criterion is printed at the end of the pytest run.
"""

import os
import subprocess
import sys
import time

import numpy as np
from scipy.stats import ortho_group

from ftrend.diffops import chain_diff, graph_diff
from ftrend.fhp import fit_fhp
from ftrend.ftf import AdmmConfig, fit_ftf
from ftrend.prox import fista_group_min, group_soft_threshold
from ftrend.select import parse_grid
from ftrend.sftf import SftfConfig, fit_sftf
from ftrend.sim import BenchSettings, ScenarioSpec, run_benchmark

from conftest import random_graph
from oracles import column_shrink, ftf_dual_oracle, two_point_ftf

SEED = 2026


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


def test_criterion_1_prox_oracle():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    with Budget(5):
        for _ in range(1000):
            c = rng.normal(size=int(rng.integers(1, 21))) * rng.uniform(0.1, 10)
            lam, rho = rng.uniform(0, 5), rng.uniform(0.05, 5)
            a = fista_group_min(c, lam, rho)
            worst = max(worst, np.abs(a - group_soft_threshold(c, lam / rho)).max())
    assert worst <= 1e-6


def test_criterion_2_two_point_ftf():
    rng = np.random.default_rng(SEED)
    op = chain_diff(2, 0)
    worst = 0.0
    with Budget(10):
        for _ in range(100):
            Z = rng.normal(size=(2, int(rng.integers(1, 6)))) * rng.uniform(0.1, 10)
            lam = rng.uniform(0, 1) * np.linalg.norm(Z[1] - Z[0])
            B = fit_ftf(Z, op, AdmmConfig(lam)).coefficients
            worst = max(worst, np.abs(B - two_point_ftf(Z, lam)).max())
    assert worst <= 1e-4


def test_criterion_3_small_instance_optimality():
    rng = np.random.default_rng(SEED)
    gaps = []
    with Budget(120):
        for _ in range(50):
            k = int(rng.integers(0, 2))
            T, L = int(rng.integers(k + 2, 7)), int(rng.integers(1, 4))
            Z = rng.normal(size=(T, L)) * rng.uniform(0.5, 5)
            lam = rng.uniform(0.01, 2) * np.abs(Z).max()
            op = chain_diff(T, k)
            res = fit_ftf(Z, op, AdmmConfig(lam))
            _, ref, _ = ftf_dual_oracle(Z, op.toarray(), lam)
            gaps.append(res.objective - ref)
    gaps = np.array(gaps)
    assert np.abs(gaps).max() <= 1e-3
    assert gaps.max() <= 1e-3


def test_criterion_4_fhp_exactness():
    rng = np.random.default_rng(SEED)
    with Budget(10):
        for T in (3, 10, 100, 500):
            for k in (0, 1, 2):
                if T <= k + 1:
                    continue
                op = chain_diff(T, k)
                Z = rng.normal(size=(T, 4))
                lam = 10 ** rng.uniform(-2, 3)
                B = fit_fhp(Z, op, lam)
                M = np.eye(T) + 2 * lam * op.gram().toarray()
                assert np.linalg.norm(M @ B - Z) <= 1e-10 * np.linalg.norm(Z)
                Bi = fit_fhp(Z, op, 1e8)
                assert np.linalg.norm(op.apply(Bi)) <= 1e-4 * np.linalg.norm(op.apply(Z))
                # distance to the null-space projection decays like 1 / (2 lam mu_min);
                # compare only where that bound is below the tolerance
                mu_min = np.linalg.eigvalsh(op.gram().toarray())[k + 1]
                if 1 / (2e8 * mu_min) <= 1e-5:
                    P = np.vander(np.linspace(-1, 1, T), k + 1)
                    proj = P @ np.linalg.lstsq(P, Z, rcond=None)[0]
                    assert np.abs(Bi - proj).max() <= 1e-4 * np.abs(proj).max()


def test_criterion_5_operator_structure():
    from scipy.special import comb

    rng = np.random.default_rng(SEED)
    with Budget(5):
        for k in range(5):
            T = 40
            D = chain_diff(T, k).toarray()
            pattern = [(-1) ** j * comb(k + 1, j, exact=True) for j in range(k + 2)]
            for i, row in enumerate(D):
                assert np.array_equal(row[i:i + k + 2], pattern) and np.count_nonzero(row) == k + 2
            t = np.arange(1, T + 1, dtype=float) / T
            for j in range(k + 1):
                assert np.abs(D @ t**j).max() <= 1e-8
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(3, 25)))
            adj = np.zeros((g.n, g.n))
            for i, j in g.edges:
                adj[i, j] = adj[j, i] = 1
            lap = np.diag(adj.sum(axis=1)) - adj
            assert np.array_equal(graph_diff(g, 1).toarray(), lap)


def test_criterion_6_piecewise_constant_ordering():
    spec = ScenarioSpec(3, 5.0, seed=SEED, replications=20)
    settings = BenchSettings(methods=(("ftf", 0), ("fhp", 0)), L=5, lam_grid=parse_grid("1e-3:1e3:20:log"))
    with Budget(15 * 60):
        table = run_benchmark(spec, settings)
    ftf, fhp = table.row("ftf", 0), table.row("fhp", 0)
    print(f"\nscenario 3: ftf {ftf['mean_mse']:.3f} (se {ftf['se_mse']:.3f}), fhp {fhp['mean_mse']:.3f}")
    assert ftf["reps"] == fhp["reps"] == 20
    assert ftf["mean_mse"] < fhp["mean_mse"]
    assert 1.5 <= ftf["mean_mse"] <= 4.5


def test_criterion_7_sparse_basis_count():
    spec = ScenarioSpec(4, 3.0, seed=SEED, replications=20)
    settings = BenchSettings(
        methods=(("ftf", 1), ("sftf", 1)), L=10,
        lam_grid=parse_grid("1e-3:1e3:20:log"), psi_grid=parse_grid("1e-1:1e1:5:log"),
    )
    with Budget(20 * 60):
        table = run_benchmark(spec, settings)
    ftf, sftf = table.row("ftf", 1), table.row("sftf", 1)
    print(f"\nscenario 4: sftf {sftf['mean_mse']:.3f} with {sftf['mean_nbasis']:.2f} bases, ftf {ftf['mean_mse']:.3f}")
    assert ftf["reps"] == sftf["reps"] == 20
    assert sftf["mean_nbasis"] <= 2
    assert sftf["mean_mse"] < ftf["mean_mse"]


def test_criterion_8_rotation_equivariance():
    rng = np.random.default_rng(SEED)
    with Budget(60):
        for _ in range(20):
            T, k = int(rng.integers(8, 40)), int(rng.integers(0, 3))
            Z = rng.normal(size=(T, 4)) * rng.uniform(0.5, 5)
            R = ortho_group.rvs(4, random_state=rng)
            op = chain_diff(T, k)
            cfg = AdmmConfig(rng.uniform(0.1, 5))
            B = fit_ftf(Z, op, cfg).coefficients
            BR = fit_ftf(Z @ R, op, cfg).coefficients
            assert np.linalg.norm(BR - B @ R) <= 1e-5 * np.linalg.norm(B)


def test_criterion_9_sftf_column_oracle():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    with Budget(30):
        for _ in range(100):
            T, L = int(rng.integers(4, 30)), int(rng.integers(1, 8))
            Z = rng.normal(size=(T, L)) * rng.uniform(0.5, 5)
            om = rng.uniform(0.2, 5, L)
            psi = rng.uniform(0, 1) * np.linalg.norm(Z, axis=0).max() / om.min()
            op = chain_diff(T, int(rng.integers(0, 3)))
            res = fit_sftf(Z, op, SftfConfig(0.0, psi=psi, omega=om, eps0=1e-8))
            worst = max(worst, np.abs(res.coefficients - column_shrink(Z, psi * om)).max())
    assert worst <= 1e-5


def test_criterion_10_bench_determinism(tmp_path):
    args = [sys.executable, "-m", "ftrend.cli", "bench", "--scenario", "3", "--sigma", "5", "--reps", "4",
            "--seed", str(SEED), "--methods", "ftf,fhp,sftf,fpc", "--k", "0", "1", "--basis", "4",
            "--lambda-grid", "1e-2:1e2:6:log", "--psi-grid", "1e-1:1e1:3:log", "--folds", "5"]
    outputs = []
    for run, threads in enumerate(("1", "1", "4")):
        env = dict(os.environ, FTREND_THREADS=threads)
        out = tmp_path / f"run{run}"
        proc = subprocess.run(args + ["--out", str(out)], env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append((out / "bench.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]
    assert outputs[0].count(b"\n") == 1 + 7
