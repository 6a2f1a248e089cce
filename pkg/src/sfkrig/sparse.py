"""Sparse kriging weights via augmented Lagrangian + FISTA.

Minimizes f(lam) = lam^T C lam - 2 c0^T lam + eta * sum_i w_i |lam_i|
subject to g(lam) = 1^T lam - 1 = 0, where w_i are adaptive weights from
the plain kriging solution. The equality constraint is handled by an
augmented Lagrangian outer loop; each subproblem
    f(lam) + mu_k g(lam) + (rho_k / 2) g(lam)^2
is a smooth quadratic plus weighted L1 and is solved by FISTA with
per-coordinate soft thresholding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .kriging import KrigingSystem, OfkSolution, ofk_solve

ADAPTIVE_WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True)
class SofkConfig:
    """Solver tolerances and safeguards."""

    rho0: float = 1.0           # initial penalty parameter
    alpha: float = 0.9          # feasibility-decrease trigger for growing rho
    kappa: float = 2.0          # rho growth factor
    feas_tol: float = 1e-8      # |1^T lam - 1| at termination
    inner_tol: float = 1e-10    # FISTA relative coordinate-change tolerance
    max_outer: int = 200
    max_inner: int = 10000
    zero_clip: float = 1e-10    # |lam_i| below this reported as exactly zero

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        if self.kappa <= 1:
            raise ValueError("kappa must be > 1")
        for name in ("rho0", "feas_tol", "inner_tol", "zero_clip"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass(frozen=True)
class SofkProblem:
    """A kriging system with an adaptive weighted-L1 penalty."""

    system: KrigingSystem
    eta: float
    tau: float
    w_hat: np.ndarray           # adaptive weights, > 0 (floored entries huge)

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        w = np.asarray(self.w_hat, dtype=float)
        if w.shape != (self.system.n,) or np.any(w <= 0):
            raise ValueError("w_hat must be positive with one entry per site")
        object.__setattr__(self, "w_hat", w)

    @classmethod
    def from_ofk(cls, system: KrigingSystem, ofk: OfkSolution,
                 eta: float, tau: float) -> "SofkProblem":
        return cls(system, eta, tau, adaptive_weights(ofk, tau))


@dataclass
class SofkSolution:
    """Solver output: weights, multiplier, support, and diagnostics."""

    lam: np.ndarray
    mu: float
    support: np.ndarray                 # indices of exactly nonzero weights
    objective_trace: list[float]        # f(lam_k) per outer iteration
    feas_trace: list[float]             # |g(lam_k)| per outer iteration
    rho_trace: list[float]
    mu_trace: list[float]
    inner_iters: list[int]
    outer_iters: int
    inner_iters_total: int
    converged: bool
    feas_residual: float                # |1^T lam - 1| before renormalization

    def diagnostics_rows(self):
        """One row per outer iteration: k, f, abs_g, rho, mu, inner_iters."""
        return [
            (k, f, g, r, m, it)
            for k, (f, g, r, m, it) in enumerate(
                zip(self.objective_trace, self.feas_trace, self.rho_trace,
                    self.mu_trace, self.inner_iters)
            )
        ]


def adaptive_weights(ofk: OfkSolution, tau: float) -> np.ndarray:
    """w_i = max(|lam_i|, 1e-8)^(-tau); near-zero weights get a huge penalty."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    return np.maximum(np.abs(ofk.lam), ADAPTIVE_WEIGHT_FLOOR) ** (-tau)


def soft_threshold(v, theta):
    """Prox of theta * |.|: sign(v) * max(|v| - theta, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def sofk_objective(problem: SofkProblem, lam) -> float:
    """f(lam) = lam^T C lam - 2 c0^T lam + eta * sum w_i |lam_i|."""
    lam = np.asarray(lam, dtype=float)
    sys_ = problem.system
    return float(lam @ sys_.C @ lam - 2.0 * sys_.c0 @ lam
                 + problem.eta * problem.w_hat @ np.abs(lam))


def power_iteration_lmax(C: np.ndarray, rho: float, tol: float = 1e-10,
                         max_iter: int = 10000) -> float:
    """Largest eigenvalue of 2C + rho * ones ones^T, inflated by 1% for safety."""
    n = C.shape[0]
    v = np.ones(n) / np.sqrt(n)
    lmax = 0.0
    for _ in range(max_iter):
        w = 2.0 * (C @ v) + rho * v.sum()
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v_new = w / norm
        lmax_new = float(v_new @ (2.0 * (C @ v_new) + rho * v_new.sum()))
        if abs(lmax_new - lmax) <= tol * max(1.0, abs(lmax_new)):
            lmax = lmax_new
            break
        lmax, v = lmax_new, v_new
    return 1.01 * lmax


def fista_subproblem(problem: SofkProblem, mu_k: float, rho_k: float,
                     lam_init, config: SofkConfig,
                     L: float | None = None) -> tuple[np.ndarray, int, bool]:
    """Minimize 0.5 ||A lam - b||^2 + eta sum w_i |lam_i| by FISTA.

    A is never formed: A^T A = 2C + rho ones ones^T and
    A^T b = 2 c0 + (rho - mu) ones, so the smooth gradient is computed from
    the system matrices directly. Returns (lam, iterations, converged).
    """
    if rho_k <= 0:
        raise ValueError("rho_k must be positive")
    sys_ = problem.system
    C, c0 = sys_.C, sys_.c0
    n = sys_.n
    if L is None:
        L = power_iteration_lmax(C, rho_k)
    rhs = 2.0 * c0 + (rho_k - mu_k) * np.ones(n)
    thresh = problem.eta * problem.w_hat / L
    lam = np.asarray(lam_init, dtype=float).copy()
    y = lam.copy()
    t = 1.0
    for j in range(1, config.max_inner + 1):
        grad = 2.0 * (C @ y) + rho_k * y.sum() - rhs
        lam_new = soft_threshold(y - grad / L, thresh)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = lam_new + ((t - 1.0) / t_new) * (lam_new - lam)
        delta = np.max(np.abs(lam_new - lam))
        scale = max(1.0, np.max(np.abs(lam_new)))
        lam = lam_new
        t = t_new
        if delta <= config.inner_tol * scale:
            return lam, j, True
    return lam, config.max_inner, False


def _renormalize_exact(lam: np.ndarray) -> np.ndarray:
    """Rescale so the weights sum to exactly 1.0 in floating point."""
    total = lam.sum()
    if total != 0.0:
        lam = lam / total
    # absorb the remaining rounding gap into one coordinate; if a coordinate's
    # ulp is too coarse to land exactly (the update cycles), try the next one
    for j in np.argsort(-np.abs(lam)):
        if lam[j] == 0.0:
            continue
        for _ in range(10):
            gap = 1.0 - lam.sum()
            if gap == 0.0:
                return lam
            if lam[j] + gap == 0.0:
                break  # never silently change the support
            lam[j] += gap
    return lam


def augmented_lagrangian_solve(problem: SofkProblem,
                               config: SofkConfig = SofkConfig(),
                               ofk: OfkSolution | None = None,
                               lmax_cache: dict | None = None) -> SofkSolution:
    """Outer multiplier updates around warm-started FISTA subproblems.

    Starts from the plain kriging solution, updates
    mu <- mu + rho * g(lam) each outer iteration, and doubles rho whenever
    |g| failed to shrink by the factor alpha. Terminates once |g| <= feas_tol
    with a converged inner solve. Weights below zero_clip are snapped to
    exactly zero and the remainder renormalized to sum to one exactly.

    lmax_cache maps rho -> step-size eigenvalue; pass a shared dict when
    solving many problems against the same covariance matrix.
    """
    sys_ = problem.system
    if ofk is None:
        ofk = ofk_solve(sys_)
    lam = ofk.lam.copy()
    mu = ofk.mu
    rho = config.rho0

    objective_trace = [sofk_objective(problem, lam)]
    feas_trace = [abs(lam.sum() - 1.0)]
    rho_trace = [rho]
    mu_trace = [mu]
    inner_counts = [0]

    if lmax_cache is None:
        lmax_cache = {}
    converged = False
    inner_total = 0
    outer = 0
    prev_abs_g = feas_trace[0]
    for outer in range(1, config.max_outer + 1):
        L = lmax_cache.get(rho)
        if L is None:
            L = power_iteration_lmax(sys_.C, rho)
            lmax_cache[rho] = L
        lam, n_inner, inner_ok = fista_subproblem(problem, mu, rho, lam, config, L=L)
        inner_total += n_inner
        g = lam.sum() - 1.0
        abs_g = abs(g)
        mu = mu + rho * g

        objective_trace.append(sofk_objective(problem, lam))
        feas_trace.append(abs_g)
        rho_trace.append(rho)
        mu_trace.append(mu)
        inner_counts.append(n_inner)

        if abs_g <= config.feas_tol and inner_ok:
            converged = True
            break
        # grow the penalty when feasibility stalls (compared in magnitude;
        # g can change sign across iterations)
        if abs_g > config.alpha * prev_abs_g:
            rho *= config.kappa
        prev_abs_g = abs_g

    feas_residual = abs(lam.sum() - 1.0)
    lam_out = np.where(np.abs(lam) <= config.zero_clip, 0.0, lam)
    lam_out = _renormalize_exact(lam_out)
    support = np.flatnonzero(lam_out)
    return SofkSolution(
        lam=lam_out, mu=mu, support=support,
        objective_trace=objective_trace, feas_trace=feas_trace,
        rho_trace=rho_trace, mu_trace=mu_trace, inner_iters=inner_counts,
        outer_iters=outer, inner_iters_total=inner_total,
        converged=converged, feas_residual=feas_residual,
    )


def objective_lower_bound(system: KrigingSystem, cho=None) -> float:
    """-c0^T C^-1 c0, a lower bound on the penalized objective for any lam."""
    if cho is None:
        cho = system.cholesky()
    return -float(system.c0 @ cho_solve(cho, system.c0))


@dataclass
class BatchSolution:
    """Output of solve_many: one column per problem."""

    lam: np.ndarray           # (m, n)
    mu: np.ndarray            # (m,)
    converged: np.ndarray     # (m,) bool
    outer_iters: np.ndarray   # (m,)
    feas_residual: np.ndarray  # (m,), before renormalization

    def support_sizes(self) -> np.ndarray:
        return np.count_nonzero(self.lam, axis=1)


def solve_many(C, c0, w_hat, eta, lam0, mu0,
               config: SofkConfig = SofkConfig()) -> BatchSolution:
    """Run the augmented-Lagrangian solver on many problems in lockstep.

    Amortizes numpy per-operation overhead when many solves share a
    covariance structure (same observed sites, many targets or penalty
    settings). Each column follows the same outer/inner scheme as
    augmented_lagrangian_solve; the only difference is the FISTA step size,
    which uses the bound 2*lmax(C) + rho*n instead of a per-rho power
    iteration (a valid, slightly larger Lipschitz constant).

    C is (n, n) shared by every problem or (m, n, n) per problem; c0, w_hat,
    lam0 are (m, n); eta is scalar or (m,); mu0 is (m,).
    """
    c0 = np.asarray(c0, dtype=float)
    m, n = c0.shape
    C = np.asarray(C, dtype=float)
    shared_C = C.ndim == 2
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (m,))
    w_hat = np.asarray(w_hat, dtype=float)
    if shared_C:
        lmax_C = float(np.linalg.eigvalsh(C)[-1])
        lmax = np.full(m, lmax_C)
    else:
        lmax = np.linalg.eigvalsh(C)[:, -1]

    # per-column state
    lam = np.array(lam0, dtype=float)
    mu = np.array(mu0, dtype=float)
    rho = np.full(m, config.rho0)
    y = lam.copy()
    t = np.ones(m)
    L = 1.01 * (2.0 * lmax + rho * n)
    rhs = 2.0 * c0 + (rho - mu)[:, None]
    thresh = (eta / L)[:, None] * w_hat
    prev_abs_g = np.abs(lam.sum(axis=1) - 1.0)
    inner_count = np.zeros(m, dtype=int)
    outer_count = np.zeros(m, dtype=int)

    out_lam = np.empty_like(lam)
    out_mu = np.empty(m)
    out_conv = np.zeros(m, dtype=bool)
    out_outer = np.zeros(m, dtype=int)
    out_feas = np.zeros(m)
    active = np.arange(m)  # original column of each live state row

    while len(active):
        if shared_C:
            CY = y @ C
        else:
            CY = np.einsum("mij,mj->mi", C[active], y)
        grad = 2.0 * CY + (rho[:, None] * y.sum(axis=1, keepdims=True)) - rhs
        lam_new = soft_threshold(y - grad / L[:, None], thresh)
        step = lam_new - lam
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = lam_new + ((t - 1.0) / t_new)[:, None] * step
        delta = np.max(np.abs(step), axis=1)
        scale = np.maximum(1.0, np.max(np.abs(lam_new), axis=1))
        lam = lam_new
        t = t_new
        inner_count += 1

        inner_ok = delta <= config.inner_tol * scale
        trig = inner_ok | (inner_count >= config.max_inner)
        if np.any(trig):
            idx = np.flatnonzero(trig)
            g = lam[idx].sum(axis=1) - 1.0
            abs_g = np.abs(g)
            mu[idx] += rho[idx] * g
            outer_count[idx] += 1
            finished = (abs_g <= config.feas_tol) & inner_ok[idx]
            exhausted = outer_count[idx] >= config.max_outer
            done_local = finished | exhausted
            # columns that keep going: penalty growth + fresh inner solve
            cont = idx[~done_local]
            if len(cont):
                g_cont = g[~done_local]
                grow = np.abs(g_cont) > config.alpha * prev_abs_g[cont]
                rho[cont[grow]] *= config.kappa
                L[cont] = 1.01 * (2.0 * lmax[cont] + rho[cont] * n)
                rhs[cont] = 2.0 * c0[cont] + (rho[cont] - mu[cont])[:, None]
                thresh[cont] = (eta[cont] / L[cont])[:, None] * w_hat[cont]
                prev_abs_g[cont] = np.abs(g_cont)
                y[cont] = lam[cont]
                t[cont] = 1.0
                inner_count[cont] = 0
            done = idx[done_local]
            if len(done):
                cols = active[done]
                out_lam[cols] = lam[done]
                out_mu[cols] = mu[done]
                out_conv[cols] = finished[done_local]
                out_outer[cols] = outer_count[done]
                out_feas[cols] = abs_g[done_local]
                keep = np.ones(len(active), dtype=bool)
                keep[done] = False
                active = active[keep]
                lam, mu, rho, y, t, L = (lam[keep], mu[keep], rho[keep],
                                         y[keep], t[keep], L[keep])
                rhs, thresh, prev_abs_g = (rhs[keep], thresh[keep],
                                           prev_abs_g[keep])
                inner_count, outer_count = inner_count[keep], outer_count[keep]
                c0, w_hat, eta, lmax = (c0[keep], w_hat[keep], eta[keep],
                                        lmax[keep])

    for j in range(m):
        col = np.where(np.abs(out_lam[j]) <= config.zero_clip, 0.0, out_lam[j])
        out_lam[j] = _renormalize_exact(col)
    return BatchSolution(out_lam, out_mu, out_conv, out_outer, out_feas)
