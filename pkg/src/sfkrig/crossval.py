"""Leave-one-out cross-validation for the penalty hyperparameters.

Each site is predicted from the remaining sites with the sparse solver and
the integrated squared error (computed in coefficient space through the
Gram matrix) is summed over sites. The variogram model is fitted once on
the full dataset and reused across folds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import FunctionalDataset
from .errors import CvError, SfkrigError
from .kriging import build_system, ofk_solve
from .sparse import (SofkConfig, SofkProblem, adaptive_weights,
                     augmented_lagrangian_solve, solve_many)
from .variogram import VariogramModel


@dataclass(frozen=True)
class CvGrid:
    """Candidate (eta, tau) pairs."""

    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("grid must be nonempty")
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("grid pairs must be distinct")

    @classmethod
    def default(cls) -> "CvGrid":
        etas = np.logspace(-4, 1, 12)
        taus = (0.5, 1.0, 2.0)
        return cls(tuple((float(e), t) for e in etas for t in taus))


@dataclass(frozen=True)
class CvReport:
    """Score table plus the index of the selected pair."""

    scores: tuple[tuple[float, float, float], ...]  # (eta, tau, cv_score)
    best: int

    @property
    def best_pair(self) -> tuple[float, float]:
        eta, tau, _ = self.scores[self.best]
        return eta, tau


def _fold_errors(dataset: FunctionalDataset, model: VariogramModel, Phi,
                 pairs, config: SofkConfig) -> np.ndarray:
    """Per-fold integrated squared errors, one row per fold, one column per pair.

    The fold's kriging system and plain-kriging solution are shared across
    the hyperparameter pairs.
    """
    n = dataset.locations.n
    Phi = np.asarray(Phi, dtype=float)
    errors = np.empty((n, len(pairs)))
    all_idx = np.arange(n)
    for i in range(n):
        rest = np.concatenate([all_idx[:i], all_idx[i + 1:]])
        sub = dataset.subset(rest)
        try:
            system = build_system(model, sub.locations, dataset.locations.coords[i])
            ofk = ofk_solve(system)
            for p, (eta, tau) in enumerate(pairs):
                problem = SofkProblem.from_ofk(system, ofk, eta, tau)
                sol = augmented_lagrangian_solve(problem, config, ofk=ofk)
                d = dataset.W[i] - sub.W.T @ sol.lam
                errors[i, p] = float(d @ Phi @ d)
        except SfkrigError as exc:
            raise CvError(
                f"fold {i} (site {dataset.locations.site_ids[i]!r}) failed: {exc}"
            ) from exc
    return errors


def _fold_errors_batched(dataset: FunctionalDataset, model: VariogramModel,
                         Phi, pairs, config: SofkConfig) -> np.ndarray:
    """Same contract as _fold_errors, solving all fold x pair problems in
    one lockstep batch (see sparse.solve_many)."""
    n = dataset.locations.n
    Phi = np.asarray(Phi, dtype=float)
    n_pairs = len(pairs)
    all_idx = np.arange(n)
    C3 = np.empty((n * n_pairs, n - 1, n - 1))
    c0s = np.empty((n * n_pairs, n - 1))
    whats = np.empty((n * n_pairs, n - 1))
    etas = np.empty(n * n_pairs)
    lam0 = np.empty((n * n_pairs, n - 1))
    mu0 = np.empty(n * n_pairs)
    W_rest = []
    for i in range(n):
        rest = np.concatenate([all_idx[:i], all_idx[i + 1:]])
        sub = dataset.subset(rest)
        W_rest.append(sub.W)
        try:
            system = build_system(model, sub.locations,
                                  dataset.locations.coords[i])
            ofk = ofk_solve(system)
        except SfkrigError as exc:
            raise CvError(
                f"fold {i} (site {dataset.locations.site_ids[i]!r}) failed: {exc}"
            ) from exc
        for p, (eta, tau) in enumerate(pairs):
            col = i * n_pairs + p
            C3[col] = system.C
            c0s[col] = system.c0
            whats[col] = adaptive_weights(ofk, tau)
            etas[col] = eta
            lam0[col] = ofk.lam
            mu0[col] = ofk.mu
    batch = solve_many(C3, c0s, whats, etas, lam0, mu0, config)
    errors = np.empty((n, n_pairs))
    for i in range(n):
        for p in range(n_pairs):
            d = dataset.W[i] - W_rest[i].T @ batch.lam[i * n_pairs + p]
            errors[i, p] = float(d @ Phi @ d)
    return errors


def loocv_score(dataset: FunctionalDataset, model: VariogramModel, Phi,
                eta: float, tau: float,
                config: SofkConfig = SofkConfig()) -> float:
    """Sum over sites of the integrated squared leave-one-out error."""
    if dataset.locations.n < 3:
        raise ValueError("LOOCV needs at least 3 sites")
    errors = _fold_errors(dataset, model, Phi, [(eta, tau)], config)
    return float(errors[:, 0].sum())


def grid_select(dataset: FunctionalDataset, model: VariogramModel, Phi,
                grid: CvGrid, config: SofkConfig = SofkConfig(),
                engine: str = "scalar") -> CvReport:
    """Score every grid pair and pick the minimizer.

    Ties are broken by smallest eta, then smallest tau. Fold errors are
    reduced by ordered summation so results are deterministic.
    engine="batched" solves all fold/pair problems in one vectorized batch
    (same algorithm, marginally different floating-point path).
    """
    if dataset.locations.n < 3:
        raise ValueError("LOOCV needs at least 3 sites")
    if engine == "batched":
        errors = _fold_errors_batched(dataset, model, Phi, grid.pairs, config)
    elif engine == "scalar":
        errors = _fold_errors(dataset, model, Phi, grid.pairs, config)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    totals = errors.sum(axis=0)
    scores = tuple(
        (eta, tau, float(s)) for (eta, tau), s in zip(grid.pairs, totals)
    )
    best = min(range(len(scores)),
               key=lambda j: (scores[j][2], scores[j][0], scores[j][1]))
    return CvReport(scores, best)
