"""Basis systems, least-squares smoothing, and Gram matrices.

A basis turns per-site longitudinal observations into coefficient vectors
w_i so that the smoothed curve at site i is w_i^T phi(t). The Gram matrix
Phi = integral of phi(t) phi(t)^T over the domain converts coefficient-space
differences into integrated squared function differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline

from .dataio import LocationSet, LongitudinalTable
from .errors import DataError, DomainError, SmoothingError


@dataclass(frozen=True)
class BasisDescriptor:
    """A finite basis system on a closed time interval.

    kind: "bspline" (order k, clamped knot vector) or "fourier"
    (orthonormal constant + sine/cosine pairs; M must be odd).
    """

    kind: str
    M: int
    domain: tuple[float, float]
    order: int = 4                      # bspline only
    knots: np.ndarray | None = None     # full clamped knot vector, bspline only
    period: float | None = None         # fourier only

    def __post_init__(self):
        t0, t1 = self.domain
        if not (np.isfinite(t0) and np.isfinite(t1) and t0 < t1):
            raise DataError("domain must be a finite interval [T0, T1] with T0 < T1")
        if self.M < 1:
            raise DataError("M must be >= 1")
        if self.kind == "bspline":
            if self.order < 1:
                raise DataError("bspline order must be >= 1")
            if self.M < self.order:
                raise DataError("bspline needs M >= order")
            knots = self.knots
            if knots is None:
                knots = _default_knots(self.M, self.order, t0, t1)
            knots = np.asarray(knots, dtype=float)
            if len(knots) != self.M + self.order:
                raise DataError(
                    f"knot vector must have M + order = {self.M + self.order} entries"
                )
            if np.any(np.diff(knots) < 0):
                raise DataError("knot vector must be nondecreasing")
            if knots[0] != t0 or knots[-1] != t1:
                raise DataError("knot vector must span the domain")
            object.__setattr__(self, "knots", knots)
            object.__setattr__(self, "period", None)
        elif self.kind == "fourier":
            if self.M % 2 == 0:
                raise DataError("fourier basis needs odd M (constant + sin/cos pairs)")
            period = self.period if self.period is not None else t1 - t0
            if period <= 0:
                raise DataError("period must be positive")
            object.__setattr__(self, "period", float(period))
            object.__setattr__(self, "knots", None)
        else:
            raise DataError(f"unknown basis kind {self.kind!r}")

    def to_json(self) -> dict:
        doc: dict = {"kind": self.kind, "M": self.M, "domain": list(self.domain)}
        if self.kind == "bspline":
            doc["order"] = self.order
            doc["knots"] = [float(x) for x in self.knots]
        else:
            doc["period"] = self.period
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "BasisDescriptor":
        try:
            kind = doc["kind"]
            M = int(doc["M"])
            domain = (float(doc["domain"][0]), float(doc["domain"][1]))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise DataError(f"invalid basis document: {exc}") from exc
        if kind == "bspline":
            return cls(kind, M, domain, order=int(doc.get("order", 4)),
                       knots=doc.get("knots"))
        return cls(kind, M, domain, period=doc.get("period"))


def _default_knots(M: int, order: int, t0: float, t1: float) -> np.ndarray:
    """Clamped knot vector with equally spaced interior knots."""
    n_interior = M - order
    interior = np.linspace(t0, t1, n_interior + 2)[1:-1]
    return np.concatenate([[t0] * order, interior, [t1] * order])


@dataclass(frozen=True)
class FunctionalDataset:
    """Smoothed functional data: sites plus an n x M coefficient matrix."""

    locations: LocationSet
    basis: BasisDescriptor
    W: np.ndarray  # shape (n, M)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        object.__setattr__(self, "W", W)
        if W.shape != (self.locations.n, self.basis.M):
            raise DataError("W must be (n_sites, M)")
        if not np.all(np.isfinite(W)):
            raise DataError("coefficient matrix contains non-finite entries")

    def subset(self, indices) -> "FunctionalDataset":
        idx = list(indices)
        return FunctionalDataset(self.locations.subset(idx), self.basis, self.W[idx])


def _check_domain(basis: BasisDescriptor, ts: np.ndarray) -> None:
    t0, t1 = basis.domain
    if np.any(ts < t0) or np.any(ts > t1):
        raise DomainError(f"time outside domain [{t0}, {t1}]")


def design_matrix(basis: BasisDescriptor, ts) -> np.ndarray:
    """Evaluate every basis function on a grid; rows index times."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    _check_domain(basis, ts)
    if basis.kind == "bspline":
        return BSpline.design_matrix(
            ts, basis.knots, basis.order - 1, extrapolate=False
        ).toarray()
    p = basis.period
    out = np.empty((len(ts), basis.M))
    out[:, 0] = 1.0 / np.sqrt(p)
    amp = np.sqrt(2.0 / p)
    for j in range(1, (basis.M + 1) // 2):
        arg = 2.0 * np.pi * j * ts / p
        out[:, 2 * j - 1] = amp * np.sin(arg)
        out[:, 2 * j] = amp * np.cos(arg)
    return out


def evaluate_basis(basis: BasisDescriptor, t: float) -> np.ndarray:
    """Value of (phi_1(t), ..., phi_M(t)) at a single time."""
    return design_matrix(basis, [t])[0]


def gram_matrix(basis: BasisDescriptor) -> np.ndarray:
    """Phi = integral over the domain of phi(t) phi(t)^T dt.

    Fourier with period == domain length is orthonormal, so Phi is the
    identity exactly. B-spline products are piecewise polynomials of degree
    2(order-1), integrated exactly by Gauss-Legendre with `order` nodes per
    knot span.
    """
    t0, t1 = basis.domain
    if basis.kind == "fourier":
        if np.isclose(basis.period, t1 - t0, rtol=1e-12, atol=0.0):
            return np.eye(basis.M)
        # non-natural period: fall back to dense quadrature per oscillation
        nodes, weights = leggauss(64)
        n_panels = max(4 * basis.M, 32)
        edges = np.linspace(t0, t1, n_panels + 1)
        Phi = np.zeros((basis.M, basis.M))
        for a, b in zip(edges[:-1], edges[1:]):
            ts = 0.5 * (b - a) * nodes + 0.5 * (a + b)
            B = design_matrix(basis, ts)
            Phi += 0.5 * (b - a) * (B.T * weights) @ B
        return Phi
    k = basis.order
    nodes, weights = leggauss(k)  # exact through degree 2k-1 >= 2(k-1)
    spans = np.unique(basis.knots)
    Phi = np.zeros((basis.M, basis.M))
    for a, b in zip(spans[:-1], spans[1:]):
        if b <= a:
            continue
        ts = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        B = design_matrix(basis, ts)
        Phi += 0.5 * (b - a) * (B.T * weights) @ B
    return 0.5 * (Phi + Phi.T)


def smooth(table: LongitudinalTable, basis: BasisDescriptor,
           ridge: float = 0.0) -> FunctionalDataset:
    """Least-squares fit of each site's observations in the basis.

    Minimizes sum_j (x_ij - w^T phi(t_ij))^2 + ridge * ||w||^2 per site.
    With ridge = 0 a rank-deficient design raises SmoothingError naming the
    site.
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    n = table.locations.n
    W = np.empty((n, basis.M))
    for i, sid in enumerate(table.locations.site_ids):
        B = design_matrix(basis, table.times[i])
        y = table.values[i]
        if ridge == 0.0:
            if len(y) < basis.M:
                raise SmoothingError(
                    f"site {sid!r}: {len(y)} observations < M = {basis.M} "
                    "(set ridge > 0 or add data)"
                )
            q, r = np.linalg.qr(B)
            diag = np.abs(np.diag(r))
            if np.any(diag < 1e-10 * max(diag.max(), 1.0)):
                raise SmoothingError(f"site {sid!r}: rank-deficient design")
            W[i] = np.linalg.solve(r, q.T @ y)
        else:
            A = B.T @ B + ridge * np.eye(basis.M)
            W[i] = np.linalg.solve(A, B.T @ y)
    return FunctionalDataset(table.locations, basis, W)


def evaluate_function(basis: BasisDescriptor, w, grid) -> np.ndarray:
    """w^T phi(t) on a grid of times."""
    w = np.asarray(w, dtype=float)
    if w.shape != (basis.M,):
        raise ValueError(f"coefficient vector must have length {basis.M}")
    return design_matrix(basis, grid) @ w
