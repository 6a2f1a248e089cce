"""Shared helpers: random problem generators and brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest

from sfkrig.dataio import LocationSet
from sfkrig.kriging import KrigingSystem, build_system
from sfkrig.variogram import VariogramModel


def random_locations(rng: np.random.Generator, n: int, d: int = 2) -> LocationSet:
    coords = rng.uniform(0.0, 1.0, size=(n, d))
    return LocationSet(tuple(f"s{i}" for i in range(n)), coords)


def random_system(rng: np.random.Generator, n: int,
                  range_param: float | None = None) -> KrigingSystem:
    """A valid kriging system from random sites and an exponential model."""
    loc = random_locations(rng, n)
    model = VariogramModel("exponential", 0.0,
                           float(rng.uniform(0.5, 3.0)),
                           range_param or float(rng.uniform(0.2, 2.0)))
    s0 = rng.uniform(0.0, 1.0, size=2)
    return build_system(model, loc, s0)


def refining_grid_search(objective, lo, hi, steps: int = 21,
                         rounds: int = 10):
    """Brute-force minimizer: repeatedly grid the box and shrink around the
    argmin. Returns (x_best, f_best)."""
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    dims = len(lo)
    best_x, best_f = None, np.inf
    for _ in range(rounds):
        axes = [np.linspace(lo[k], hi[k], steps) for k in range(dims)]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.column_stack([m.ravel() for m in mesh])
        vals = np.array([objective(p) for p in points])
        j = int(np.argmin(vals))
        if vals[j] < best_f:
            best_f, best_x = float(vals[j]), points[j].copy()
        width = (hi - lo) / (steps - 1)
        lo = best_x - 2.0 * width
        hi = best_x + 2.0 * width
    return best_x, best_f


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
