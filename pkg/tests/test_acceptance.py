"""End-to-end acceptance gate.

Each test prints one PASS/FAIL line for its criterion, with the measured
quantities, then asserts. Criterion 9 needs an external weather dataset
(set SFKRIG_WEATHER_DIR to a directory with locations.csv and
observations.csv) and is skipped otherwise.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from conftest import random_locations, random_system, refining_grid_search

from sfkrig.basis import (BasisDescriptor, design_matrix, gram_matrix,
                          smooth)
from sfkrig.cli import main as cli_main
from sfkrig.dataio import load_locations, load_longitudinal
from sfkrig.kriging import build_system, ofk_solve
from sfkrig.simulate import SimulationDesign, run_experiment
from sfkrig.sparse import (SofkConfig, SofkProblem, augmented_lagrangian_solve,
                           objective_lower_bound, sofk_objective)
from sfkrig.variogram import (EmpiricalTraceVariogram, VariogramModel,
                              empirical_trace_variogram, fit_model,
                              model_gamma)

TIGHT = SofkConfig(feas_tol=1e-10, inner_tol=1e-12, max_outer=100,
                   max_inner=50000)
# two orders of magnitude inside the criterion tolerance, at a fraction of
# the tight config's runtime
FAST = SofkConfig(feas_tol=1e-8, inner_tol=1e-10, max_outer=100,
                  max_inner=50000)

# (system, solution) pairs accumulated by the solver-based criteria so the
# lower-bound criterion can sweep every recorded objective trace
_RUNS: list = []


def _announce(capsys, num: int, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\nACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {num}: {detail}"


def _solve(system, eta, tau=1.0, config=TIGHT):
    ofk = ofk_solve(system)
    problem = SofkProblem.from_ofk(system, ofk, eta, tau)
    sol = augmented_lagrangian_solve(problem, config, ofk=ofk)
    _RUNS.append((system, problem, sol, ofk))
    return sol, ofk


def test_criterion_01_exact_interpolation(capsys):
    rng = np.random.default_rng(101)
    model = VariogramModel("exponential", 0.0, 2.0, 5.0)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        loc = random_locations(rng, 8)
        for i in range(loc.n):
            sol = ofk_solve(build_system(model, loc, loc.coords[i]))
            worst = max(worst, float(np.max(np.abs(sol.lam - np.eye(8)[i]))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 1.0
    _announce(capsys, 1, ok,
              f"max ||lam - e_i||_inf = {worst:.2e} (tol 1e-8), "
              f"{elapsed:.2f}s (limit 1s)")


def test_criterion_02_eta_zero_reduction(capsys):
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    worst_lam = worst_mu = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 21))
        system = random_system(rng, n)
        sol, ofk = _solve(system, eta=0.0, config=FAST)
        worst_lam = max(worst_lam, float(np.max(np.abs(sol.lam - ofk.lam))))
        # the sparse solver's multiplier is scaled to the gradient
        # 2(C lam - c0); halve it to compare with the bordered-system one
        worst_mu = max(worst_mu, abs(sol.mu / 2.0 - ofk.mu))
    elapsed = time.perf_counter() - t0
    ok = worst_lam <= 1e-6 and worst_mu <= 1e-6 and elapsed < 10.0
    _announce(capsys, 2, ok,
              f"50 instances, max |dlam| = {worst_lam:.2e}, "
              f"max |dmu| = {worst_mu:.2e} (tol 1e-6), "
              f"{elapsed:.2f}s (limit 10s)")


def test_criterion_03_oracle_optimality(capsys):
    rng = np.random.default_rng(103)
    t0 = time.perf_counter()
    worst_gap = -np.inf
    for _ in range(25):
        system = random_system(rng, 3)
        for eta in (0.05, 0.5):
            sol, ofk = _solve(system, eta)
            problem = SofkProblem.from_ofk(system, ofk, eta, 1.0)

            def constrained(x2):
                lam = np.array([x2[0], x2[1], 1.0 - x2[0] - x2[1]])
                return sofk_objective(problem, lam)

            center = sol.lam[:2]
            _, f_grid = refining_grid_search(constrained, center - 0.5,
                                             center + 0.5)
            worst_gap = max(worst_gap,
                            sofk_objective(problem, sol.lam) - f_grid)
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-4 and elapsed < 60.0
    _announce(capsys, 3, ok,
              f"25 x 2 instances, max objective excess over refined "
              f"constraint-plane grid = {worst_gap:.2e} (tol 1e-4), "
              f"{elapsed:.2f}s (limit 60s)")


def test_criterion_04_lower_bound(capsys):
    rng = np.random.default_rng(104)
    for _ in range(30):
        n = int(rng.integers(2, 15))
        _solve(random_system(rng, n), eta=float(rng.uniform(0.0, 1.0)))
    n_traced = 0
    worst_margin = np.inf
    for system, _, sol, _ in _RUNS:
        bound = objective_lower_bound(system)
        for f in sol.objective_trace:
            worst_margin = min(worst_margin, f - bound)
            n_traced += 1
    ok = worst_margin >= -1e-9
    _announce(capsys, 4, ok,
              f"{n_traced} recorded objective values over {len(_RUNS)} runs, "
              f"min f(lam_k) - bound = {worst_margin:.2e} (tol -1e-9)")


def test_criterion_05_feasibility(capsys):
    rng = np.random.default_rng(105)
    worst_before = 0.0
    exact_after = True
    n_conv = 0
    for _ in range(30):
        n = int(rng.integers(2, 15))
        sol, _ = _solve(random_system(rng, n),
                        eta=float(rng.uniform(0.0, 0.5)))
        if sol.converged:
            n_conv += 1
            worst_before = max(worst_before, sol.feas_residual)
            exact_after = exact_after and sol.lam.sum() == 1.0
    ok = n_conv == 30 and worst_before <= 1e-8 and exact_after
    _announce(capsys, 5, ok,
              f"{n_conv}/30 converged, max |1'lam - 1| before "
              f"renormalization = {worst_before:.2e} (tol 1e-8), "
              f"sum after renormalization exactly 1.0: {exact_after}")


def test_criterion_06_variogram_recovery(capsys):
    truth = VariogramModel("exponential", 0.0, 2.0, 5.0)
    rs = np.linspace(0.5, 15.0, 15)
    emp = EmpiricalTraceVariogram(rs, model_gamma(truth, rs),
                                  np.ones(15, dtype=int), 15.0)
    t0 = time.perf_counter()
    fit = fit_model(emp, "exponential")
    elapsed = time.perf_counter() - t0
    # a zero nugget has no relative scale; accept <= 1% of the total sill
    err_nugget = fit.nugget / truth.sigma_tot
    err_psill = abs(fit.psill - 2.0) / 2.0
    err_range = abs(fit.range_param - 5.0) / 5.0
    ok = (err_nugget <= 0.01 and err_psill <= 0.01 and err_range <= 0.01
          and elapsed < 1.0)
    _announce(capsys, 6, ok,
              f"relative errors: nugget/sill {err_nugget:.2e}, "
              f"psill {err_psill:.2e}, range {err_range:.2e} (tol 1%), "
              f"{elapsed:.2f}s (limit 1s)")


def test_criterion_07_gram_matrices(capsys):
    t0 = time.perf_counter()
    fourier = BasisDescriptor("fourier", 25, (0.0, 365.0))
    err_fourier = float(np.max(np.abs(gram_matrix(fourier) - np.eye(25))))
    bspline = BasisDescriptor("bspline", 10, (0.0, 1.0), order=4)
    ts = np.linspace(0.0, 1.0, 1_000_001)
    B = design_matrix(bspline, ts)
    w = np.full(len(ts), 1e-6)
    w[0] = w[-1] = 5e-7
    err_bspline = float(np.max(np.abs(gram_matrix(bspline) - (B.T * w) @ B)))
    elapsed = time.perf_counter() - t0
    ok = err_fourier <= 1e-10 and err_bspline <= 1e-8 and elapsed < 5.0
    _announce(capsys, 7, ok,
              f"Fourier Gram vs identity {err_fourier:.2e} (tol 1e-10); "
              f"B-spline Gram vs 1e6-point trapezoid {err_bspline:.2e} "
              f"(tol 1e-8); {elapsed:.2f}s (limit 5s)")


def test_criterion_08_simulation_trends(capsys):
    t0 = time.perf_counter()
    results = {}
    for r in (1.0, 5.0, 10.0):
        design = SimulationDesign(n_observed=50, range_param=r, seed=7)
        results[r] = run_experiment(design, 20)
    elapsed = time.perf_counter() - t0

    parts = []
    mse_ok = True
    for r, res in results.items():
        s = res.summary()
        pooled_se = np.sqrt((s["sofk_mse_sd"] ** 2 + s["ofk_mse_sd"] ** 2)
                            / s["n_replicates"])
        within = s["sofk_mse_mean"] <= s["ofk_mse_mean"] + pooled_se
        mse_ok = mse_ok and within
        parts.append(f"range {r:g}: sparse {s['sofk_mse_mean']:.4f} vs "
                     f"plain {s['ofk_mse_mean']:.4f} (+1 SE "
                     f"{pooled_se:.4f}), nonzero {s['nonzero_mean']:.2f}")
    nz1 = results[1.0].summary()["nonzero_mean"]
    nz10 = results[10.0].summary()["nonzero_mean"]
    nz_ok = nz1 > nz10
    nearest = {r: res.nearest_zero_fraction() for r, res in results.items()}
    nearest_ok = all(v == 0.0 for v in nearest.values())
    ok = mse_ok and nz_ok and nearest_ok and elapsed < 900.0
    _announce(capsys, 8, ok,
              "; ".join(parts) + f"; nonzero range1 {nz1:.2f} > range10 "
              f"{nz10:.2f}: {nz_ok}; nearest-bin zero fractions "
              f"{sorted(nearest.values())} (all must be 0); "
              f"{elapsed:.0f}s (limit 900s)")


def test_criterion_09_weather_workflow(capsys):
    data_dir = os.environ.get("SFKRIG_WEATHER_DIR")
    if not data_dir:
        with capsys.disabled():
            print("\nACCEPTANCE 9: SKIP — set SFKRIG_WEATHER_DIR to a "
                  "directory with locations.csv and observations.csv")
        pytest.skip("weather dataset not provided")
    data = Path(data_dir)
    loc = load_locations(data / "locations.csv")
    table = load_longitudinal(data / "observations.csv", loc)
    target_name = os.environ.get("SFKRIG_WEATHER_TARGET", "The Pas")
    matches = [i for i, s in enumerate(loc.site_ids)
               if target_name.lower() in s.lower()]
    assert matches, f"no site matching {target_name!r}"
    target_idx = matches[0]

    t_all = np.concatenate(table.times)
    basis = BasisDescriptor("fourier", 25,
                            (float(t_all.min()), float(t_all.max())))
    dataset = smooth(table, basis)
    Phi = gram_matrix(basis)
    rest = [i for i in range(loc.n) if i != target_idx]
    sub = dataset.subset(np.array(rest))
    emp = empirical_trace_variogram(sub, Phi)
    model = fit_model(emp, "exponential")

    from sfkrig.crossval import CvGrid, grid_select
    report = grid_select(sub, model, Phi, CvGrid.default(),
                         config=SofkConfig(feas_tol=1e-8, inner_tol=1e-10,
                                           max_outer=100, max_inner=20000),
                         engine="batched")
    eta, tau = report.best_pair
    system = build_system(model, sub.locations, loc.coords[target_idx])
    ofk = ofk_solve(system)
    sol = augmented_lagrangian_solve(
        SofkProblem.from_ofk(system, ofk, eta, tau), TIGHT, ofk=ofk)

    dists = np.linalg.norm(sub.locations.coords - loc.coords[target_idx],
                           axis=1)
    cutoff_rank = int(np.ceil(len(rest) / 3))
    nearest_third = set(np.argsort(dists)[:cutoff_rank])
    support = set(sol.support.tolist())
    positive = bool(np.all(sol.lam[sol.support] > 0))
    within_near = support <= nearest_third
    ok = len(support) <= 6 and positive and within_near
    _announce(capsys, 9, ok,
              f"target {loc.site_ids[target_idx]!r}: support size "
              f"{len(support)} (<= 6), all positive: {positive}, all in "
              f"nearest third: {within_near}, eta {eta:g}, tau {tau:g}")


def test_criterion_10_determinism(capsys, tmp_path):
    runner = CliRunner()
    outs = []
    for jobs, name in (("4", "a"), ("4", "b"), ("1", "c")):
        out = tmp_path / name
        result = runner.invoke(cli_main, [
            "experiment", "--n", "20", "--range", "2.0", "--replicates", "3",
            "--seed", "11", "--jobs", jobs, "--out", str(out)],
            catch_exceptions=False)
        assert result.exit_code == 0, result.output
        outs.append(out)
    names = ("experiment.csv", "summary.csv", "zero_fraction.csv")
    identical = all((outs[0] / n).read_bytes() == (o / n).read_bytes()
                    for n in names for o in outs[1:])
    _announce(capsys, 10, identical,
              f"three runs (--jobs 4, 4, 1) byte-identical across "
              f"{', '.join(names)}: {identical}")
