"""Synthetic data generation and the prediction-accuracy experiment.

Basis coefficients are drawn as independent Gaussian random fields (one per
basis index) over a regular candidate grid, with exponential spatial
covariance sampled via Cholesky. Longitudinal observations add i.i.d.
Gaussian noise to the curves at equally spaced time points. The experiment
loop compares sparse and plain kriging on the held-out grid sites.

Randomness is split with numpy SeedSequence: one child stream per
replicate, and within a replicate one child per purpose (site selection,
coefficients, noise), so parallel replicates are reproducible.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor
from scipy.spatial.distance import cdist

from .basis import BasisDescriptor, design_matrix, gram_matrix, smooth
from .crossval import CvGrid, grid_select
from .dataio import LocationSet, LongitudinalTable
from .errors import SimError
from .kriging import KrigingSystem, build_system, ofk_solve
from .sparse import SofkConfig, adaptive_weights, solve_many
from .variogram import (VariogramModel, empirical_trace_variogram, fit_model,
                        trace_covariance)


@dataclass(frozen=True)
class SimulationDesign:
    """Parameters of one synthetic-data scenario."""

    n_observed: int
    range_param: float
    grid_side: int = 15
    sill: float = 2.0
    nugget: float = 0.0
    noise_sd: float = 0.3
    N_time: int = 31
    M: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.grid_side < 2:
            raise ValueError("grid_side must be >= 2")
        if not (1 <= self.n_observed <= self.grid_side ** 2):
            raise ValueError(
                f"n_observed must be in [1, {self.grid_side ** 2}]"
            )
        if self.range_param <= 0 or self.sill <= 0:
            raise ValueError("range and sill must be positive")
        if self.nugget < 0 or self.noise_sd < 0:
            raise ValueError("nugget and noise_sd must be >= 0")
        if self.N_time < 1 or self.M < 1:
            raise ValueError("N_time and M must be >= 1")

    def basis(self) -> BasisDescriptor:
        return BasisDescriptor("bspline", self.M, (0.0, 1.0), order=4)

    def field_model(self) -> VariogramModel:
        return VariogramModel("exponential", self.nugget, self.sill,
                              self.range_param)


def candidate_grid(grid_side: int) -> np.ndarray:
    """Equally spaced grid_side x grid_side locations on [0,1]^2."""
    axis = np.linspace(0.0, 1.0, grid_side)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _purpose_streams(design: SimulationDesign, seed_seq=None):
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(design.seed)
    sites_ss, coeff_ss, noise_ss = seed_seq.spawn(3)
    return (np.random.default_rng(sites_ss), np.random.default_rng(coeff_ss),
            np.random.default_rng(noise_ss))


def generate_coefficients(design: SimulationDesign, seed_seq=None):
    """Draw the coefficient fields and pick the observed subset.

    Returns (W_obs, obs_idx, W_all): coefficients of the observed sites, the
    indices of those sites in the candidate grid, and the full truth over
    all grid sites. Each of the M coefficient fields is an independent
    zero-mean Gaussian field with covariance sill * exp(-d / range).
    """
    sites_rng, coeff_rng, _ = _purpose_streams(design, seed_seq)
    coords = candidate_grid(design.grid_side)
    n_all = len(coords)
    D = cdist(coords, coords)
    Sigma = trace_covariance(design.field_model(), D)
    jitter = 1e-10 * design.sill
    for attempt in range(6):
        try:
            L = np.linalg.cholesky(Sigma)
            break
        except np.linalg.LinAlgError:
            if attempt == 5:
                raise SimError("field covariance not positive definite "
                               "even after jitter")
            Sigma = Sigma + jitter * np.eye(n_all)
            jitter *= 10.0
    Z = coeff_rng.standard_normal((n_all, design.M))
    W_all = L @ Z
    obs_idx = np.sort(sites_rng.choice(n_all, size=design.n_observed,
                                       replace=False))
    return W_all[obs_idx], obs_idx, W_all


def _site_ids(grid_side: int, indices) -> tuple[str, ...]:
    width = len(str(grid_side ** 2 - 1))
    return tuple(f"g{idx:0{width}d}" for idx in indices)


def generate_longitudinal(W_obs: np.ndarray, design: SimulationDesign,
                          locations: LocationSet,
                          seed_seq=None) -> LongitudinalTable:
    """Noisy observations of the observed-site curves on the shared time grid."""
    _, _, noise_rng = _purpose_streams(design, seed_seq)
    basis = design.basis()
    ts = np.linspace(0.0, 1.0, design.N_time)
    B = design_matrix(basis, ts)
    truth = W_obs @ B.T                              # (n_obs, N_time)
    noise = design.noise_sd * noise_rng.standard_normal(truth.shape)
    values = truth + noise
    return LongitudinalTable(locations,
                             [ts.copy() for _ in range(len(W_obs))],
                             [values[i] for i in range(len(W_obs))])


@dataclass(frozen=True)
class SimulatedData:
    """One simulated dataset plus the held-out truth."""

    design: SimulationDesign
    locations_all: LocationSet
    obs_idx: np.ndarray
    W_all: np.ndarray
    locations: LocationSet          # observed subset
    table: LongitudinalTable

    @property
    def held_out_idx(self) -> np.ndarray:
        mask = np.ones(len(self.W_all), dtype=bool)
        mask[self.obs_idx] = False
        return np.flatnonzero(mask)


def simulate_dataset(design: SimulationDesign, seed_seq=None) -> SimulatedData:
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(design.seed)
    W_obs, obs_idx, W_all = generate_coefficients(design, seed_seq)
    coords = candidate_grid(design.grid_side)
    locations_all = LocationSet(_site_ids(design.grid_side, range(len(coords))),
                                coords)
    locations = locations_all.subset(obs_idx)
    table = generate_longitudinal(W_obs, design, locations, seed_seq)
    return SimulatedData(design, locations_all, obs_idx, W_all, locations, table)


# Lean solver settings and hyperparameter grid for the experiment loop; the
# comparison is statistical, so library-default tolerances would spend
# minutes per replicate for no change in the aggregate numbers.
EXPERIMENT_CONFIG = SofkConfig(feas_tol=1e-6, inner_tol=1e-8,
                               max_outer=60, max_inner=2000)


def experiment_cv_grid() -> CvGrid:
    etas = (1e-4, 3.16e-4, 1e-3)
    return CvGrid(tuple((float(e), 1.0) for e in etas))


@dataclass(frozen=True)
class ReplicateResult:
    replicate: int
    sofk_mse: float
    ofk_mse: float
    nonzero_mean: float
    eta: float
    tau: float
    # distance-binned weight sparsity over all held-out predictions
    hist_edges: np.ndarray
    hist_zero: np.ndarray
    hist_total: np.ndarray
    nearest_zero: int
    nearest_total: int


N_DIST_BINS = 10


def run_replicate(design: SimulationDesign, replicate: int, seed_seq,
                  cv_grid: CvGrid | None = None,
                  config: SofkConfig = EXPERIMENT_CONFIG) -> ReplicateResult:
    """Simulate, fit, tune, and score one replicate."""
    if cv_grid is None:
        cv_grid = experiment_cv_grid()
    sim = simulate_dataset(design, seed_seq)
    basis = design.basis()
    dataset = smooth(sim.table, basis)
    Phi = gram_matrix(basis)
    emp = empirical_trace_variogram(dataset, Phi)
    # the generating process is nugget-free by design; a free nugget would
    # absorb smoothing noise and flatten the fitted spatial structure
    model = fit_model(emp, "exponential", fixed_nugget=design.nugget)
    report = grid_select(dataset, model, Phi, cv_grid, config,
                         engine="batched")
    eta, tau = report.best_pair

    held = sim.held_out_idx
    coords_all = sim.locations_all.coords
    sys0 = build_system(model, sim.locations, coords_all[held[0]])
    cho = cho_factor(sys0.C, lower=True)
    n_obs = sim.locations.n
    n_held = len(held)

    # all held-out targets share C; solve them in one batch
    dist_mat = cdist(coords_all[held], sim.locations.coords)
    c0s = trace_covariance(model, dist_mat)
    lam0 = np.empty((n_held, n_obs))
    mu0 = np.empty(n_held)
    whats = np.empty((n_held, n_obs))
    lam_ofk = np.empty((n_held, n_obs))
    for k, h in enumerate(held):
        system = KrigingSystem(sys0.C, c0s[k], coords_all[h],
                               sim.locations.site_ids)
        ofk = ofk_solve(system, cho=cho)
        lam0[k] = ofk.lam
        mu0[k] = ofk.mu
        whats[k] = adaptive_weights(ofk, tau)
        lam_ofk[k] = ofk.lam
    batch = solve_many(sys0.C, c0s, whats, eta, lam0, mu0, config)

    W_true = sim.W_all[held]
    d_s = W_true - batch.lam @ dataset.W
    d_o = W_true - lam_ofk @ dataset.W
    sofk_sq = np.einsum("ki,ij,kj->k", d_s, Phi, d_s)
    ofk_sq = np.einsum("ki,ij,kj->k", d_o, Phi, d_o)
    support_sizes = batch.support_sizes()

    edges = np.linspace(0.0, np.sqrt(2.0), N_DIST_BINS + 1)
    bins = np.clip(np.searchsorted(edges, dist_mat, side="left") - 1,
                   0, N_DIST_BINS - 1)
    zero = batch.lam == 0.0
    hist_total = np.bincount(bins.ravel(), minlength=N_DIST_BINS)
    hist_zero = np.bincount(bins.ravel(), weights=zero.ravel().astype(float),
                            minlength=N_DIST_BINS).astype(int)
    nearest_zero = int(zero[np.arange(n_held), np.argmin(dist_mat, axis=1)].sum())
    return ReplicateResult(
        replicate=replicate,
        sofk_mse=float(sofk_sq.mean()),
        ofk_mse=float(ofk_sq.mean()),
        nonzero_mean=float(support_sizes.mean()),
        eta=eta, tau=tau,
        hist_edges=edges, hist_zero=hist_zero, hist_total=hist_total,
        nearest_zero=nearest_zero, nearest_total=len(held),
    )


def _replicate_worker(args):
    design, replicate, ss_state, cv_grid, config = args
    return run_replicate(design, replicate, np.random.SeedSequence(**ss_state),
                         cv_grid, config)


@dataclass(frozen=True)
class ExperimentResult:
    design: SimulationDesign
    replicates: tuple[ReplicateResult, ...]

    def rows(self):
        """CSV rows: replicate, n, range, sofk_mse, ofk_mse, nonzero_mean."""
        return [
            (r.replicate, self.design.n_observed, self.design.range_param,
             r.sofk_mse, r.ofk_mse, r.nonzero_mean)
            for r in self.replicates
        ]

    def summary(self) -> dict:
        if not self.replicates:
            return {"n_replicates": 0}
        sofk = np.array([r.sofk_mse for r in self.replicates])
        ofk = np.array([r.ofk_mse for r in self.replicates])
        nz = np.array([r.nonzero_mean for r in self.replicates])
        ddof = 1 if len(sofk) > 1 else 0
        return {
            "n_replicates": len(sofk),
            "n": self.design.n_observed,
            "range": self.design.range_param,
            "sofk_mse_mean": float(sofk.mean()),
            "sofk_mse_sd": float(sofk.std(ddof=ddof)),
            "ofk_mse_mean": float(ofk.mean()),
            "ofk_mse_sd": float(ofk.std(ddof=ddof)),
            "nonzero_mean": float(nz.mean()),
            "nonzero_sd": float(nz.std(ddof=ddof)),
        }

    def zero_fraction_by_distance(self):
        """(bin_edges, zero_fraction, totals) pooled over replicates."""
        if not self.replicates:
            return np.array([]), np.array([]), np.array([])
        edges = self.replicates[0].hist_edges
        zero = sum(r.hist_zero for r in self.replicates)
        total = sum(r.hist_total for r in self.replicates)
        frac = np.divide(zero, total, out=np.zeros(len(zero)),
                         where=total > 0)
        return edges, frac, total

    def nearest_zero_fraction(self) -> float:
        zero = sum(r.nearest_zero for r in self.replicates)
        total = sum(r.nearest_total for r in self.replicates)
        return zero / total if total else 0.0


def run_experiment(design: SimulationDesign, n_replicates: int,
                   cv_grid: CvGrid | None = None,
                   config: SofkConfig = EXPERIMENT_CONFIG,
                   jobs: int = 1) -> ExperimentResult:
    """Run independent replicates of the full estimation pipeline.

    Replicates use per-replicate seed substreams, so results do not depend
    on the parallelism degree; aggregation order is fixed.
    """
    if n_replicates < 0:
        raise ValueError("n_replicates must be >= 0")
    if n_replicates == 0:
        return ExperimentResult(design, ())
    children = np.random.SeedSequence(design.seed).spawn(n_replicates)
    if jobs <= 1:
        results = [run_replicate(design, r, children[r], cv_grid, config)
                   for r in range(n_replicates)]
    else:
        args = [
            (design, r,
             {"entropy": children[r].entropy, "spawn_key": children[r].spawn_key},
             cv_grid, config)
            for r in range(n_replicates)
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replicate_worker, args))
    return ExperimentResult(design, tuple(results))
