"""Trace-variogram estimation and parametric models.

The empirical trace-variogram bins integrated squared differences between
site curves by inter-site distance. A parametric model (exponential,
gaussian, or half-integer Matern) fitted to the bins induces the
trace-covariance C(r) = sigma_tot - gamma(r) used to assemble kriging
systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import pdist, squareform

from .basis import FunctionalDataset
from .errors import DataError, FitError, VariogramError

FAMILIES = ("exponential", "gaussian", "matern")
MATERN_NU = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class EmpiricalTraceVariogram:
    """Binned trace-variogram estimates: (bin center, gamma_hat, pair count)."""

    r: np.ndarray
    gamma: np.ndarray
    count: np.ndarray
    cutoff: float

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        g = np.asarray(self.gamma, dtype=float)
        c = np.asarray(self.count, dtype=int)
        if not (len(r) == len(g) == len(c)):
            raise DataError("bin arrays must have equal length")
        if np.any(np.diff(r) <= 0):
            raise DataError("bin centers must be strictly increasing")
        if np.any(g < 0) or np.any(c < 1):
            raise DataError("invalid bin contents")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "count", c)


@dataclass(frozen=True)
class VariogramModel:
    """Parametric trace-variogram gamma(r) with gamma(0) = 0."""

    family: str
    nugget: float
    psill: float
    range_param: float
    nu: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown variogram family {self.family!r}")
        if self.nugget < 0 or self.psill < 0 or self.range_param <= 0:
            raise DataError("need nugget >= 0, psill >= 0, range > 0")
        if self.family == "matern":
            if self.nu not in MATERN_NU:
                raise DataError(f"matern nu must be one of {MATERN_NU}")
        else:
            object.__setattr__(self, "nu", None)

    @property
    def sigma_tot(self) -> float:
        return self.nugget + self.psill

    def to_json(self) -> dict:
        doc = {"family": self.family, "nugget": self.nugget,
               "psill": self.psill, "range": self.range_param}
        if self.nu is not None:
            doc["nu"] = self.nu
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "VariogramModel":
        try:
            return cls(doc["family"], float(doc["nugget"]), float(doc["psill"]),
                       float(doc["range"]), nu=doc.get("nu"))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"invalid variogram document: {exc}") from exc


def _correlation(family: str, nu, r: np.ndarray, range_param: float) -> np.ndarray:
    if family == "exponential":
        return np.exp(-r / range_param)
    if family == "gaussian":
        return np.exp(-((r / range_param) ** 2))
    if nu == 0.5:
        return np.exp(-r / range_param)
    if nu == 1.5:
        u = np.sqrt(3.0) * r / range_param
        return (1.0 + u) * np.exp(-u)
    u = np.sqrt(5.0) * r / range_param  # nu == 2.5
    return (1.0 + u + u * u / 3.0) * np.exp(-u)


def model_gamma(model: VariogramModel, r):
    """gamma(r); exactly 0 at r = 0, nugget + psill * (1 - corr(r)) beyond."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("distances must be >= 0")
    rho = _correlation(model.family, model.nu, r_arr, model.range_param)
    out = np.where(r_arr > 0, model.nugget + model.psill * (1.0 - rho), 0.0)
    return float(out) if np.isscalar(r) else out


def trace_covariance(model: VariogramModel, r):
    """C(r) = sigma_tot - gamma(r); C(0) = sigma_tot."""
    g = model_gamma(model, r)
    return model.sigma_tot - g


def functional_sq_distance(w_i, w_j, Phi) -> float:
    """Integrated squared difference of two curves, (wi-wj)^T Phi (wi-wj)."""
    w_i = np.asarray(w_i, dtype=float)
    w_j = np.asarray(w_j, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    if w_i.shape != w_j.shape or Phi.shape != (len(w_i), len(w_i)):
        raise ValueError("dimension mismatch")
    d = w_i - w_j
    return float(d @ Phi @ d)


def empirical_trace_variogram(dataset: FunctionalDataset, Phi,
                              n_bins: int = 15, cutoff: float | None = None,
                              min_pairs: int = 1) -> EmpiricalTraceVariogram:
    """Bin all site pairs with distance in (0, cutoff] into equal-width bins.

    Per bin, gamma_hat = sum of integrated squared curve differences over
    member pairs / (2 * pair count). Default cutoff is half the maximum
    inter-site distance. Bins with fewer than min_pairs pairs are dropped.
    """
    n = dataset.locations.n
    if n < 2:
        raise VariogramError("need at least two sites")
    dists = pdist(dataset.locations.coords)
    if cutoff is None:
        cutoff = 0.5 * float(dists.max())
    if cutoff <= 0:
        raise VariogramError("cutoff must be positive")
    W = dataset.W
    G = W @ np.asarray(Phi, dtype=float) @ W.T
    q = np.diag(G)
    sq = q[:, None] + q[None, :] - 2.0 * G  # pairwise integrated sq. differences
    sq_flat = squareform(np.maximum(sq, 0.0), checks=False)

    mask = (dists > 0) & (dists <= cutoff)
    if not np.any(mask):
        raise VariogramError(f"no site pair within cutoff {cutoff}")
    edges = np.linspace(0.0, cutoff, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, dists[mask], side="left") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=sq_flat[mask], minlength=n_bins)
    keep = counts >= max(min_pairs, 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return EmpiricalTraceVariogram(
        centers[keep], sums[keep] / (2.0 * counts[keep]), counts[keep], cutoff
    )


def _wls_objective(theta, emp: EmpiricalTraceVariogram, family: str, nu,
                   range_max: float) -> float:
    nugget, psill, range_param = theta
    if nugget < 0 or psill < 0 or not (0 < range_param <= range_max):
        return 1e30
    rho = _correlation(family, nu, emp.r, range_param)
    resid = emp.gamma - (nugget + psill * (1.0 - rho))
    return float(np.sum(emp.count * resid * resid))


def fit_model(emp: EmpiricalTraceVariogram, family: str = "exponential",
              nu: float | None = None, range_factor: float = 3.0,
              fixed_nugget: float | None = None) -> VariogramModel:
    """Pair-count-weighted least squares over (nugget, psill, range).

    Nelder-Mead from a deterministic grid of starts
    (nugget in {0, gamma_max/2}, range in {1/4, 1/2, 1} * cutoff). The range
    is capped at range_factor * cutoff: beyond the observed lags only the
    slope psill/range is identified, and an uncapped fit can diverge to an
    arbitrarily large (psill, range) pair with the same slope.

    With fixed_nugget the nugget is held at the given value and only
    (psill, range) are optimized; useful when the measurement process is
    known to be nugget-free and a free nugget would absorb smoothing noise.
    """
    if family not in FAMILIES:
        raise DataError(f"unknown variogram family {family!r}")
    if family == "matern" and nu is None:
        nu = 0.5
    if len(emp.r) < 3:
        raise FitError(f"need >= 3 bins to fit, got {len(emp.r)}")
    if range_factor <= 0:
        raise ValueError("range_factor must be positive")
    if fixed_nugget is not None and fixed_nugget < 0:
        raise ValueError("fixed_nugget must be >= 0")
    range_max = range_factor * max(emp.cutoff, float(emp.r[-1]))
    gmax = float(emp.gamma.max())
    best = None
    diagnostics = []
    nugget_starts = (fixed_nugget,) if fixed_nugget is not None else (0.0, 0.5 * gmax)
    for nugget0 in nugget_starts:
        for frac in (0.25, 0.5, 1.0):
            if fixed_nugget is not None:
                def objective(x):
                    return _wls_objective((fixed_nugget, x[0], x[1]),
                                          emp, family, nu, range_max)
                x0 = np.array([max(gmax - nugget0, 1e-12),
                               max(frac * emp.cutoff, 1e-12)])
            else:
                def objective(x):
                    return _wls_objective(x, emp, family, nu, range_max)
                x0 = np.array([nugget0, max(gmax - nugget0, 1e-12),
                               max(frac * emp.cutoff, 1e-12)])
            res = minimize(objective, x0, method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-14,
                                    "maxiter": 5000, "maxfev": 10000})
            diagnostics.append(f"start {x0}: fun={res.fun:.3e} success={res.success}")
            if not np.isfinite(res.fun) or res.fun >= 1e30:
                continue
            if best is None or res.fun < best[0]:
                best = (res.fun, res.x)
    if best is None:
        raise FitError("all fit starts failed:\n" + "\n".join(diagnostics))
    if fixed_nugget is not None:
        nugget, (psill, range_param) = fixed_nugget, best[1]
    else:
        nugget, psill, range_param = best[1]
    return VariogramModel(family, max(nugget, 0.0), max(psill, 0.0),
                          max(range_param, 1e-12), nu=nu)
