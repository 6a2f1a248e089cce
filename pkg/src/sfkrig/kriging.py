"""Ordinary kriging for functional data.

Assembles the covariance system for a prediction site and solves the
sum-to-one constrained least-variance problem via a Schur reduction of the
bordered system (two positive-definite solves with C).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .basis import FunctionalDataset, design_matrix
from .dataio import LocationSet
from .errors import SolveError
from .variogram import VariogramModel, trace_covariance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KrigingSystem:
    """Integrated covariances among observed sites (C) and to the target (c0)."""

    C: np.ndarray       # (n, n), symmetric positive definite after jitter
    c0: np.ndarray      # (n,)
    s0: np.ndarray      # prediction coordinates
    site_ids: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.c0)

    def cholesky(self):
        return cho_factor(self.C, lower=True)


def build_system(model: VariogramModel, locations: LocationSet, s0) -> KrigingSystem:
    """C_ij = C(||s_i - s_j||), c0_i = C(||s_i - s0||).

    If the Cholesky factorization of C fails numerically, a diagonal jitter
    of 1e-10 * sigma_tot is added (escalating tenfold, logged).
    """
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (locations.dim,):
        raise ValueError(f"s0 must have dimension {locations.dim}")
    coords = locations.coords
    diff = coords[:, None, :] - coords[None, :, :]
    D = np.sqrt(np.sum(diff * diff, axis=-1))
    C = trace_covariance(model, D)
    c0 = trace_covariance(model, np.sqrt(np.sum((coords - s0) ** 2, axis=1)))
    jitter = 1e-10 * model.sigma_tot
    for _ in range(6):
        try:
            cho_factor(C, lower=True)
            break
        except np.linalg.LinAlgError:
            logger.info("covariance matrix not PD, adding jitter %g", jitter)
            C = C + jitter * np.eye(locations.n)
            jitter *= 10.0
    return KrigingSystem(C, c0, s0, locations.site_ids)


@dataclass(frozen=True)
class OfkSolution:
    """Kriging weights (summing to one) and the Lagrange multiplier."""

    lam: np.ndarray
    mu: float


def ofk_solve(system: KrigingSystem, cho=None) -> OfkSolution:
    """Solve [[C, 1], [1^T, 0]] (lam, mu) = (c0, 1).

    Schur reduction: mu = (1^T C^-1 c0 - 1) / (1^T C^-1 1), then
    lam = C^-1 (c0 - mu 1). A precomputed Cholesky factor of C may be
    passed to amortize repeated solves against the same sites.
    """
    try:
        if cho is None:
            cho = system.cholesky()
        ones = np.ones(system.n)
        z = cho_solve(cho, np.column_stack([system.c0, ones]))
        denom = float(ones @ z[:, 1])
        if denom <= 0 or not np.isfinite(denom):
            raise SolveError("bordered kriging system is singular")
        mu = (float(ones @ z[:, 0]) - 1.0) / denom
        lam = z[:, 0] - mu * z[:, 1]
    except np.linalg.LinAlgError as exc:
        raise SolveError(f"kriging solve failed: {exc}") from exc
    return OfkSolution(lam, mu)


def predict(lam, dataset: FunctionalDataset, grid) -> tuple[np.ndarray, np.ndarray]:
    """Combine site curves: w0 = W^T lam, values = w0^T phi(t) on the grid."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (dataset.locations.n,):
        raise ValueError("weight vector length must match the number of sites")
    w0 = dataset.W.T @ lam
    values = design_matrix(dataset.basis, grid) @ w0
    return w0, values
