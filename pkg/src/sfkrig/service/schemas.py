"""Pydantic request/response models for the kriging service.

Unknown fields are rejected everywhere so a typo in a config file or
request body fails loudly instead of being silently ignored.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ..basis import BasisDescriptor
from ..dataio import LocationSet, LongitudinalTable
from ..sparse import SofkConfig
from ..variogram import VariogramModel


class Schema(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Locations(Schema):
    site_ids: list[str]
    coords: list[list[float]]

    def to_core(self) -> LocationSet:
        return LocationSet(tuple(self.site_ids), np.array(self.coords,
                                                          dtype=float))

    @classmethod
    def from_core(cls, loc: LocationSet) -> "Locations":
        return cls(site_ids=list(loc.site_ids), coords=loc.coords.tolist())


class Observations(Schema):
    """Per-site time/value arrays, aligned with the location order."""

    times: list[list[float]]
    values: list[list[float]]

    def to_core(self, locations: LocationSet) -> LongitudinalTable:
        return LongitudinalTable(locations,
                                 [np.array(t, dtype=float) for t in self.times],
                                 [np.array(v, dtype=float) for v in self.values])

    @classmethod
    def from_core(cls, table: LongitudinalTable) -> "Observations":
        return cls(times=[t.tolist() for t in table.times],
                   values=[v.tolist() for v in table.values])


class Basis(Schema):
    kind: Literal["bspline", "fourier"] = "bspline"
    m: int = 10
    domain: tuple[float, float] = (0.0, 1.0)
    order: int = 4
    period: Optional[float] = None

    def to_core(self) -> BasisDescriptor:
        return BasisDescriptor(self.kind, self.m, self.domain,
                               order=self.order, period=self.period)


class VariogramFit(Schema):
    family: Literal["exponential", "gaussian", "matern"] = "exponential"
    nu: Optional[float] = None
    n_bins: int = 15
    cutoff: Optional[float] = None
    range_factor: float = 3.0
    fixed_nugget: Optional[float] = None


class VariogramModelOut(Schema):
    family: str
    nugget: float
    psill: float
    range_param: float
    nu: Optional[float] = None

    @classmethod
    def from_core(cls, model: VariogramModel) -> "VariogramModelOut":
        return cls(family=model.family, nugget=model.nugget,
                   psill=model.psill, range_param=model.range_param,
                   nu=model.nu)

    def to_core(self) -> VariogramModel:
        return VariogramModel(self.family, self.nugget, self.psill,
                              self.range_param, nu=self.nu)


class SolverSettings(Schema):
    rho0: float = 1.0
    feas_tol: float = 1e-8
    inner_tol: float = 1e-10
    max_outer: int = 200
    max_inner: int = 10000

    def to_core(self) -> SofkConfig:
        return SofkConfig(rho0=self.rho0, feas_tol=self.feas_tol,
                          inner_tol=self.inner_tol, max_outer=self.max_outer,
                          max_inner=self.max_inner)


class HealthResponse(Schema):
    status: str
    version: str


class SimulateRequest(Schema):
    n_observed: int
    range_param: float
    grid_side: int = 15
    sill: float = 2.0
    nugget: float = 0.0
    noise_sd: float = 0.3
    n_time: int = 31
    m_basis: int = 10
    seed: int = 0


class SimulateResponse(Schema):
    locations: Locations            # observed subset, canonical order
    observations: Observations
    all_locations: Locations
    observed_indices: list[int]
    truth_coefficients: list[list[float]]   # all grid sites x M
    basis: Basis


class SmoothRequest(Schema):
    locations: Locations
    observations: Observations
    basis: Basis = Basis()
    ridge: float = 0.0


class SmoothResponse(Schema):
    coefficients: list[list[float]]


class VariogramRequest(Schema):
    locations: Locations
    observations: Observations
    basis: Basis = Basis()
    fit: VariogramFit = VariogramFit()


class EmpiricalOut(Schema):
    r: list[float]
    gamma: list[float]
    count: list[int]
    cutoff: float


class VariogramResponse(Schema):
    empirical: EmpiricalOut
    model: VariogramModelOut


class CvGridIn(Schema):
    etas: list[float]
    taus: list[float] = [0.5, 1.0, 2.0]


class KrigeRequest(Schema):
    locations: Locations
    observations: Observations
    basis: Basis = Basis()
    fit: VariogramFit = VariogramFit()
    target: Optional[list[float]] = None
    target_site_id: Optional[str] = None
    sparse: bool = False
    eta: Optional[float] = None     # fixed penalty; None => CV-select
    tau: float = 1.0
    grid: Optional[CvGridIn] = None
    n_prediction_times: int = 101
    solver: SolverSettings = SolverSettings()

    @model_validator(mode="after")
    def _one_target(self):
        if (self.target is None) == (self.target_site_id is None):
            raise ValueError("exactly one of target and target_site_id "
                             "is required")
        return self


class KrigeResponse(Schema):
    site_ids: list[str]
    weights: list[float]
    mu: float
    prediction_times: list[float]
    prediction_values: list[float]
    model: VariogramModelOut
    sparse: bool
    eta: Optional[float] = None
    tau: Optional[float] = None
    support_size: int
    feasibility_residual: float
    # sparse-solver trace rows (outer_iter, objective, abs_gap, rho, mu,
    # inner_iters); None for plain kriging
    diagnostics: Optional[list[list[float]]] = None


class CvSelectRequest(Schema):
    locations: Locations
    observations: Observations
    basis: Basis = Basis()
    fit: VariogramFit = VariogramFit()
    grid: Optional[CvGridIn] = None
    solver: SolverSettings = SolverSettings()


class CvScore(Schema):
    eta: float
    tau: float
    score: float


class CvSelectResponse(Schema):
    scores: list[CvScore]
    best_eta: float
    best_tau: float


class ExperimentRequest(Schema):
    n_observed: int
    range_param: float
    grid_side: int = 15
    sill: float = 2.0
    nugget: float = 0.0
    noise_sd: float = 0.3
    n_time: int = 31
    m_basis: int = 10
    seed: int = 0
    n_replicates: int = 20
    jobs: int = 1
    grid: Optional[CvGridIn] = None


class ExperimentRow(Schema):
    replicate: int
    n: int
    range_param: float
    sofk_mse: float
    ofk_mse: float
    nonzero_mean: float


class ExperimentResponse(Schema):
    rows: list[ExperimentRow]
    summary: dict
    hist_edges: list[float]
    zero_fraction: list[float]
    nearest_zero_fraction: float


class ReportRequest(Schema):
    locations: Locations
    weights: list[float]
    target: list[float]
    n_bins: int = 10


class ReportBin(Schema):
    bin_lo: float
    bin_hi: float
    count: int
    zero_fraction: float
    min: float
    q25: float
    median: float
    q75: float
    max: float


class ReportResponse(Schema):
    bins: list[ReportBin]
