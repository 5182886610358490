"""Per-iteration step solver: pick a small perturbation of the initial state
that the variational forecast predicts will shrink the closest-approach
residual, subject to the linearized constraints and the step-size window.

Minimizes ||d + M delta||^2 over
    bound_lo <= delta <= bound_hi,
    A_ineq delta <= -g_values        (near-active inequality rows),
    A_eq delta = -h_values,
    ||delta|| <= eps1,  ||M delta|| <= eps1,
by projected gradient descent from delta = 0.  Projections onto the
intersection run cyclically over the individual sets with Dykstra's
correction terms, so each composite projection converges to the metric
projection; every per-set projection is exact, including the ||M delta||
cap (an ellipsoid), which is projected by solving its secular equation in
the eigenbasis of M^T M.  The two norm caps keep the linear forecast valid
at both the initial time and the forecasted closest-approach time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import LinearizedConstraints
from .errors import NonFiniteInput

_POWER_ITERATIONS = 50
# Dykstra usually stops after a handful of rounds (early exit below), but
# corners where several sets bind trade correction mass at a slow linear
# rate and can need several hundred rounds to reach the metric projection.
_PROJECTION_ROUNDS = 2000
_MAX_OUTER = 500
_CONVERGENCE_TOL = 1e-12

STATUS_OK = "ok"
STATUS_STALLED = "stalled"


@dataclass(frozen=True)
class IncrementProblem:
    d: np.ndarray  # residual y(t*) - yt at the forecasted closest approach
    M_star: np.ndarray  # fundamental matrix M(t*)
    y0: np.ndarray  # current candidate initial state
    lin: LinearizedConstraints
    eps0: float  # minimum step size
    eps1: float  # maximum step size

    def __post_init__(self):
        if not (0.0 < self.eps0 < self.eps1):
            raise ValueError(f"need eps1 > eps0 > 0, got eps0={self.eps0}, eps1={self.eps1}")
        if not (np.all(np.isfinite(self.d)) and np.all(np.isfinite(self.M_star))):
            raise NonFiniteInput("increment problem contains NaN/Inf")


@dataclass(frozen=True)
class IncrementSolution:
    delta: np.ndarray
    forecast_residual_norm: float  # ||d + M delta|| for the returned delta
    status: str  # "ok" or "stalled"
    # Telemetry on the minimizer before the eps0 rescale, used by the
    # controller's descent assertion.
    pre_rescale_norm: float
    pre_rescale_residual_norm: float


def _spectral_norm_sq(m: np.ndarray) -> float:
    """Largest singular value squared, by power iteration on M^T M."""
    n = m.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    mtm = m.T @ m
    for _ in range(_POWER_ITERATIONS):
        w = mtm @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(v @ (mtm @ v))


class _EllipsoidProjector:
    """Exact Euclidean projection onto {x : ||M x|| <= c}.

    In the eigenbasis of Q = M^T M the projection is
    x_i = z_i / (1 + lam * q_i) with lam >= 0 the root of
    sum q_i z_i^2 / (1 + lam q_i)^2 = c^2 (monotone decreasing in lam),
    found by bracketing plus bisection.
    """

    def __init__(self, m: np.ndarray, c: float):
        q = m.T @ m
        self.eigvals, self.eigvecs = np.linalg.eigh(q)
        self.eigvals = np.maximum(self.eigvals, 0.0)
        self.c_sq = c * c

    def quad(self, x: np.ndarray) -> float:
        w = self.eigvecs.T @ x
        return float(np.sum(self.eigvals * w * w))

    def project(self, z: np.ndarray) -> np.ndarray:
        w = self.eigvecs.T @ z
        qw_sq = self.eigvals * w * w
        if float(qw_sq.sum()) <= self.c_sq:
            return z
        q = self.eigvals

        def phi(lam: float) -> float:
            return float(np.sum(qw_sq / (1.0 + lam * q) ** 2)) - self.c_sq

        lo, hi = 0.0, 1.0
        for _ in range(200):
            if phi(hi) < 0.0:
                break
            hi *= 2.0
        # Safeguarded Newton on the monotone secular function; falls back
        # to bisection whenever the Newton step leaves the bracket.
        lam = 0.5 * (lo + hi)
        for _ in range(100):
            denom = 1.0 + lam * q
            val = float(np.sum(qw_sq / denom**2)) - self.c_sq
            if val > 0.0:
                lo = lam
            else:
                hi = lam
            if hi - lo <= 1e-15 * (1.0 + hi):
                break
            slope = -2.0 * float(np.sum(q * qw_sq / denom**3))
            newton = lam - val / slope if slope != 0.0 else lam
            lam = newton if lo < newton < hi else 0.5 * (lo + hi)
        lam = 0.5 * (lo + hi)
        return self.eigvecs @ (w / (1.0 + lam * q))


class _IntersectionProjector:
    """Metric projection onto the intersection of the constraint sets via
    Dykstra-corrected cyclic projections.

    Deterministic order per round: box, inequality halfspaces in index
    order, equality hyperplanes in index order, the eps1 ball on delta,
    the eps1 cap on M delta.  A round where neither the point nor any
    correction moves is a fixed point of the scheme, which is exactly the
    metric projection; the point alone can sit still for many rounds
    while correction mass transfers between sets that bind jointly, so
    both are monitored.

    The correction terms persist across calls (warm start): inside the
    projected-gradient loop consecutive inputs differ slightly, and warm
    duals let the slow corner transfers happen once instead of on every
    gradient step.  Passing ellipsoid=None projects without the image cap.
    """

    def __init__(self, lin: LinearizedConstraints, eps1: float,
                 ellipsoid: _EllipsoidProjector | None):
        self.lin = lin
        self.eps1 = eps1
        self.ellipsoid = ellipsoid
        self.ineq_n = lin.active_ineq_normals
        self.ineq_b = -lin.active_ineq_values
        self.eq_n = lin.eq_normals
        self.eq_b = -lin.eq_values
        n_sets = (2 + self.ineq_n.shape[0] + self.eq_n.shape[0]
                  + (1 if ellipsoid is not None else 0))
        n = lin.bound_lo.size
        self.corrections = [np.zeros(n) for _ in range(n_sets)]

    def project(self, z: np.ndarray) -> np.ndarray:
        corrections = self.corrections
        # Start so that x + sum(corrections) == z, the Dykstra invariant.
        x = z - np.sum(corrections, axis=0)
        for _ in range(_PROJECTION_ROUNDS):
            x_start = x
            corr_move = 0.0
            idx = 0
            # box
            w = x + corrections[idx]
            y = np.clip(w, self.lin.bound_lo, self.lin.bound_hi)
            new_corr = w - y
            corr_move = max(corr_move, float(np.max(np.abs(new_corr - corrections[idx]), initial=0.0)))
            corrections[idx] = new_corr
            x = y
            idx += 1
            # halfspaces a.x <= b
            for a, b in zip(self.ineq_n, self.ineq_b):
                w = x + corrections[idx]
                viol = a @ w - b
                denom = a @ a
                y = w - (viol / denom) * a if (viol > 0.0 and denom > 0.0) else w
                new_corr = w - y
                corr_move = max(corr_move, float(np.max(np.abs(new_corr - corrections[idx]), initial=0.0)))
                corrections[idx] = new_corr
                x = y
                idx += 1
            # hyperplanes a.x = b
            for a, b in zip(self.eq_n, self.eq_b):
                w = x + corrections[idx]
                denom = a @ a
                y = w - ((a @ w - b) / denom) * a if denom > 0.0 else w
                new_corr = w - y
                corr_move = max(corr_move, float(np.max(np.abs(new_corr - corrections[idx]), initial=0.0)))
                corrections[idx] = new_corr
                x = y
                idx += 1
            # ball ||x|| <= eps1
            w = x + corrections[idx]
            norm = np.linalg.norm(w)
            y = w * (self.eps1 / norm) if norm > self.eps1 else w
            new_corr = w - y
            corr_move = max(corr_move, float(np.max(np.abs(new_corr - corrections[idx]), initial=0.0)))
            corrections[idx] = new_corr
            x = y
            idx += 1
            # ellipsoid ||M x|| <= eps1
            if self.ellipsoid is not None:
                w = x + corrections[idx]
                y = self.ellipsoid.project(w)
                new_corr = w - y
                corr_move = max(corr_move, float(np.max(np.abs(new_corr - corrections[idx]), initial=0.0)))
                corrections[idx] = new_corr
                x = y
            scale = 1e-15 * (1.0 + np.max(np.abs(x)))
            if np.max(np.abs(x - x_start)) < scale and corr_move < scale:
                break
        return x


def _project_dykstra(z: np.ndarray, lin: LinearizedConstraints, eps1: float,
                     ellipsoid: _EllipsoidProjector | None) -> np.ndarray:
    """One-shot (cold) projection onto the constraint intersection."""
    return _IntersectionProjector(lin, eps1, ellipsoid).project(z)


def solve_increment(p: IncrementProblem) -> IncrementSolution:
    """Solve the constrained least-squares step and enforce the eps0 floor.

    Runs projected gradient descent with step 1/L (L the squared spectral
    norm of M_star), keeping the best feasible iterate by objective so the
    returned pre-rescale minimizer never forecasts worse than delta = 0.

    If the minimizer is shorter than eps0 it is rescaled to eps0 along the
    same direction and re-projected onto the hard constraints only (box,
    halfspaces, hyperplanes, the eps1 ball) -- not the image cap, which
    guards forecast quality rather than eligibility and would otherwise
    forbid the guaranteed non-zero step whenever the flow is locally very
    expansive (e.g. near a basin boundary).  A re-projected step shorter
    than eps0/2, or a zero minimizer, reports a stall.
    """
    m = np.asarray(p.M_star, dtype=float)
    d = np.asarray(p.d, dtype=float)
    lin = p.lin
    lip = _spectral_norm_sq(m)
    step = 1.0 / lip if lip > 0.0 else 1.0
    ellipsoid = _EllipsoidProjector(m, p.eps1)

    delta = np.zeros(d.size)
    best = delta
    best_obj = float(d @ d)
    for _ in range(_MAX_OUTER):
        grad = m.T @ (d + m @ delta)
        new = _project_dykstra(delta - step * grad, lin, p.eps1, ellipsoid)
        resid = d + m @ new
        obj = float(resid @ resid)
        if obj < best_obj:
            best, best_obj = new, obj
        if np.linalg.norm(new - delta) < _CONVERGENCE_TOL:
            delta = new
            break
        delta = new
    delta = best
    pre_norm = float(np.linalg.norm(delta))
    pre_resid = float(np.linalg.norm(d + m @ delta))

    if pre_norm < p.eps0:
        if pre_norm == 0.0:
            return IncrementSolution(
                delta=delta,
                forecast_residual_norm=pre_resid,
                status=STATUS_STALLED,
                pre_rescale_norm=pre_norm,
                pre_rescale_residual_norm=pre_resid,
            )
        delta = _project_dykstra((p.eps0 / pre_norm) * delta, lin, p.eps1,
                                 ellipsoid=None)
        if np.linalg.norm(delta) < 0.5 * p.eps0:
            return IncrementSolution(
                delta=delta,
                forecast_residual_norm=float(np.linalg.norm(d + m @ delta)),
                status=STATUS_STALLED,
                pre_rescale_norm=pre_norm,
                pre_rescale_residual_norm=pre_resid,
            )
    return IncrementSolution(
        delta=delta,
        forecast_residual_norm=float(np.linalg.norm(d + m @ delta)),
        status=STATUS_OK,
        pre_rescale_norm=pre_norm,
        pre_rescale_residual_norm=pre_resid,
    )
