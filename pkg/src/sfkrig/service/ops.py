"""Request-to-response operations behind the service endpoints.

Each function is pure given its request (plus the seed it carries), so the
CLI can call them in-process and the HTTP routes can delegate to them
without duplicated logic.
"""

from __future__ import annotations

import numpy as np

from .. import __version__
from ..basis import gram_matrix, smooth
from ..crossval import CvGrid, grid_select
from ..errors import DataError
from ..kriging import build_system, ofk_solve, predict
from ..report import weight_distance_table
from ..simulate import SimulationDesign, run_experiment, simulate_dataset
from ..sparse import SofkProblem, augmented_lagrangian_solve
from ..variogram import empirical_trace_variogram, fit_model
from . import schemas as S


def health_op() -> S.HealthResponse:
    return S.HealthResponse(status="ok", version=__version__)


def simulate_op(req: S.SimulateRequest) -> S.SimulateResponse:
    design = SimulationDesign(
        n_observed=req.n_observed, range_param=req.range_param,
        grid_side=req.grid_side, sill=req.sill, nugget=req.nugget,
        noise_sd=req.noise_sd, N_time=req.n_time, M=req.m_basis,
        seed=req.seed)
    sim = simulate_dataset(design)
    basis = design.basis()
    return S.SimulateResponse(
        locations=S.Locations.from_core(sim.locations),
        observations=S.Observations.from_core(sim.table),
        all_locations=S.Locations.from_core(sim.locations_all),
        observed_indices=[int(i) for i in sim.obs_idx],
        truth_coefficients=sim.W_all.tolist(),
        basis=S.Basis(kind=basis.kind, m=basis.M, domain=basis.domain,
                      order=basis.order))


def _smoothed(locations: S.Locations, observations: S.Observations,
              basis: S.Basis, ridge: float = 0.0):
    loc = locations.to_core()
    table = observations.to_core(loc)
    b = basis.to_core()
    return smooth(table, b, ridge=ridge), gram_matrix(b)


def smooth_op(req: S.SmoothRequest) -> S.SmoothResponse:
    dataset, _ = _smoothed(req.locations, req.observations, req.basis,
                           req.ridge)
    return S.SmoothResponse(coefficients=dataset.W.tolist())


def _fitted_model(dataset, Phi, fit: S.VariogramFit):
    emp = empirical_trace_variogram(dataset, Phi, n_bins=fit.n_bins,
                                    cutoff=fit.cutoff)
    model = fit_model(emp, fit.family, nu=fit.nu,
                      range_factor=fit.range_factor,
                      fixed_nugget=fit.fixed_nugget)
    return emp, model


def variogram_op(req: S.VariogramRequest) -> S.VariogramResponse:
    dataset, Phi = _smoothed(req.locations, req.observations, req.basis)
    emp, model = _fitted_model(dataset, Phi, req.fit)
    return S.VariogramResponse(
        empirical=S.EmpiricalOut(r=emp.r.tolist(), gamma=emp.gamma.tolist(),
                                 count=[int(c) for c in emp.count],
                                 cutoff=emp.cutoff),
        model=S.VariogramModelOut.from_core(model))


def _cv_grid(grid: S.CvGridIn | None) -> CvGrid:
    if grid is None:
        return CvGrid.default()
    if not grid.etas or not grid.taus:
        raise DataError("grid needs at least one eta and one tau")
    return CvGrid(tuple((float(e), float(t))
                        for e in grid.etas for t in grid.taus))


def krige_op(req: S.KrigeRequest) -> S.KrigeResponse:
    loc_all = req.locations.to_core()
    if req.target_site_id is not None:
        # the target site is excluded from every estimation step
        t_idx = loc_all.index_of(req.target_site_id)
        s0 = loc_all.coords[t_idx]
        keep = [i for i in range(loc_all.n) if i != t_idx]
        locations = S.Locations.from_core(loc_all.subset(keep))
        observations = S.Observations(
            times=[req.observations.times[i] for i in keep],
            values=[req.observations.values[i] for i in keep])
    else:
        s0 = np.asarray(req.target, dtype=float)
        if s0.shape != (loc_all.dim,):
            raise DataError(
                f"target must have {loc_all.dim} coordinates, got {len(s0)}")
        locations, observations = req.locations, req.observations

    dataset, Phi = _smoothed(locations, observations, req.basis)
    _, model = _fitted_model(dataset, Phi, req.fit)
    system = build_system(model, dataset.locations, s0)
    ofk = ofk_solve(system)
    config = req.solver.to_core()

    eta, tau = req.eta, req.tau
    if req.sparse:
        if eta is None:
            report = grid_select(dataset, model, Phi, _cv_grid(req.grid),
                                 config)
            eta, tau = report.best_pair
        problem = SofkProblem.from_ofk(system, ofk, eta, tau)
        sol = augmented_lagrangian_solve(problem, config, ofk=ofk)
        lam, mu = sol.lam, sol.mu
        feas = sol.feas_residual
        diagnostics = [list(map(float, row))
                       for row in sol.diagnostics_rows()]
    else:
        lam, mu = ofk.lam, ofk.mu
        feas = abs(float(lam.sum()) - 1.0)
        eta, tau = None, None
        diagnostics = None

    t0, t1 = dataset.basis.domain
    grid_t = np.linspace(t0, t1, req.n_prediction_times)
    _, values = predict(lam, dataset, grid_t)
    return S.KrigeResponse(
        site_ids=list(dataset.locations.site_ids),
        weights=lam.tolist(), mu=float(mu),
        prediction_times=grid_t.tolist(),
        prediction_values=values.tolist(),
        model=S.VariogramModelOut.from_core(model),
        sparse=req.sparse, eta=eta, tau=tau,
        support_size=int(np.count_nonzero(lam)),
        feasibility_residual=feas, diagnostics=diagnostics)


def cv_select_op(req: S.CvSelectRequest) -> S.CvSelectResponse:
    dataset, Phi = _smoothed(req.locations, req.observations, req.basis)
    _, model = _fitted_model(dataset, Phi, req.fit)
    report = grid_select(dataset, model, Phi, _cv_grid(req.grid),
                         req.solver.to_core())
    eta, tau = report.best_pair
    return S.CvSelectResponse(
        scores=[S.CvScore(eta=e, tau=t, score=s)
                for e, t, s in report.scores],
        best_eta=eta, best_tau=tau)


def experiment_op(req: S.ExperimentRequest) -> S.ExperimentResponse:
    design = SimulationDesign(
        n_observed=req.n_observed, range_param=req.range_param,
        grid_side=req.grid_side, sill=req.sill, nugget=req.nugget,
        noise_sd=req.noise_sd, N_time=req.n_time, M=req.m_basis,
        seed=req.seed)
    grid = None if req.grid is None else _cv_grid(req.grid)
    result = run_experiment(design, req.n_replicates, cv_grid=grid,
                            jobs=req.jobs)
    edges, frac, _ = result.zero_fraction_by_distance()
    return S.ExperimentResponse(
        rows=[S.ExperimentRow(replicate=r, n=n, range_param=rng,
                              sofk_mse=sm, ofk_mse=om, nonzero_mean=nz)
              for r, n, rng, sm, om, nz in result.rows()],
        summary=result.summary(),
        hist_edges=list(map(float, edges)),
        zero_fraction=list(map(float, frac)),
        nearest_zero_fraction=result.nearest_zero_fraction())


def report_op(req: S.ReportRequest) -> S.ReportResponse:
    loc = req.locations.to_core()
    weights = np.asarray(req.weights, dtype=float)
    if len(weights) != loc.n:
        raise DataError("weights length must match the number of sites")
    target = np.asarray(req.target, dtype=float)
    if target.shape != (loc.dim,):
        raise DataError(
            f"target must have {loc.dim} coordinates, got {len(target)}")
    dists = np.linalg.norm(loc.coords - target, axis=1)
    table = weight_distance_table(weights, dists, n_bins=req.n_bins)
    return S.ReportResponse(bins=[
        S.ReportBin(bin_lo=float(table.bin_lo[b]),
                    bin_hi=float(table.bin_hi[b]),
                    count=int(table.count[b]),
                    zero_fraction=float(table.zero_fraction[b]),
                    min=float(table.q_min[b]), q25=float(table.q25[b]),
                    median=float(table.median[b]), q75=float(table.q75[b]),
                    max=float(table.q_max[b]))
        for b in range(len(table.count))])
