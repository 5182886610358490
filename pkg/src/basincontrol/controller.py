"""Main control loop: iteratively perturb an initial state until it enters
the basin of attraction of the target state.

Each iteration integrates the variational system over the search window,
finds the trajectory's closest approach to the target, solves for a small
constraint-compliant perturbation that the fundamental matrix forecasts to
shrink that approach, and applies it.  Every n_test iterations (including
iteration 0, before any perturbation) the candidate is tested for actual
convergence by plain integration over the longer test window.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .constraints import ConstraintSet, is_eligible, linearize
from .dynamics import DynamicalSystem, as_state
from .errors import BasinControlError, IneligibleStart, NonFiniteState
from .increment import IncrementProblem, STATUS_STALLED, solve_increment
from .integrate import Trajectory, _grid, integrate_variational

logger = logging.getLogger(__name__)

# Treat the orbit as settled (test failed) once ||F(y)|| falls this low
# while still outside twice the target ball; see test_convergence.
SETTLE_FTOL = 1e-10

MetricSpec = Union[str, Callable[[np.ndarray, np.ndarray], float]]


@dataclass(frozen=True)
class ControlParams:
    """Knobs of the control loop.

    eps0 / eps1 : minimum / maximum Euclidean size of each incremental
        perturbation (eps1 > eps0 > 0); eps0 guarantees a non-zero step,
        eps1 keeps the variational forecast valid.
    it_max : iteration limit; exceeded -> status 1.
    t_max : window over which to search for the closest approach.
    dt : integration time step.
    t_test : window over which to test convergence (usually >> t_max).
    tol : radius of the target ball for the convergence test.
    n_test : test convergence every n_test iterations (default 1).
    metric : "euclidean" (default), "weighted_euclidean" (with
        metric_weights), or any callable (y, yt) -> distance for
        code-level users.
    """

    eps0: float
    eps1: float
    it_max: int
    t_max: float
    dt: float
    t_test: float
    tol: float
    n_test: int = 1
    metric: MetricSpec = "euclidean"
    metric_weights: Optional[Sequence[float]] = None

    def __post_init__(self):
        if not (0.0 < self.eps0 < self.eps1):
            raise ValueError(f"need eps1 > eps0 > 0, got eps0={self.eps0}, eps1={self.eps1}")
        if not (0.0 < self.dt <= self.t_max <= self.t_test):
            raise ValueError(
                f"need 0 < dt <= t_max <= t_test, got dt={self.dt}, "
                f"t_max={self.t_max}, t_test={self.t_test}"
            )
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.n_test < 1:
            raise ValueError(f"n_test must be >= 1, got {self.n_test}")
        if self.it_max < 0:
            raise ValueError(f"it_max must be >= 0, got {self.it_max}")


@dataclass
class ControlOutcome:
    """Result of a control run.

    status 0 means the last iterate is an eligible state in the target's
    basin; status 1 means the iteration limit was hit (or, with `stalled`
    set, that no eligible non-zero step existed).
    """

    status: int
    stalled: bool
    iterates: list  # perturbed initial states; last element is the final one
    n_iter: int
    total_seconds: float
    t_int: list = field(default_factory=list)  # convergence-test integration times
    t_var: list = field(default_factory=list)  # variational integration times
    t_opt: list = field(default_factory=list)  # increment-solve times

    @property
    def final_state(self) -> np.ndarray:
        return self.iterates[-1]


def resolve_metric(metric: MetricSpec, weights=None) -> Callable[[np.ndarray, np.ndarray], float]:
    """Turn a metric selector into a distance callable."""
    if callable(metric):
        return metric
    if metric == "euclidean":
        return lambda a, b: float(np.linalg.norm(a - b))
    if metric == "weighted_euclidean":
        if weights is None:
            raise ValueError("weighted_euclidean metric needs metric_weights")
        w = np.sqrt(np.asarray(weights, dtype=float))
        return lambda a, b: float(np.linalg.norm(w * (a - b)))
    raise ValueError(f"unknown metric {metric!r}")


def _distance_profile(traj: Trajectory, yt: np.ndarray, metric: MetricSpec,
                      metric_weights=None) -> np.ndarray:
    if callable(metric):
        return np.array([metric(state, yt) for state in traj.states])
    if metric == "euclidean":
        return np.linalg.norm(traj.states - yt, axis=1)
    if metric == "weighted_euclidean":
        w = np.sqrt(np.asarray(metric_weights, dtype=float))
        return np.linalg.norm((traj.states - yt) * w, axis=1)
    raise ValueError(f"unknown metric {metric!r}")


def find_closest_approach(traj: Trajectory, yt, metric: MetricSpec = "euclidean",
                          metric_weights=None):
    """Grid point of the trajectory closest to the target.

    Returns (index, time, distance); ties broken by earliest time.  t = 0
    is part of the window.
    """
    yt = as_state(yt, traj.dimension)
    dists = _distance_profile(traj, yt, metric, metric_weights)
    idx = int(np.argmin(dists))
    return idx, float(traj.times[idx]), float(dists[idx])


def test_convergence(system: DynamicalSystem, y0, yt, params: ControlParams,
                     settle_ftol: Optional[float] = SETTLE_FTOL) -> bool:
    """Does y0 evolve to within tol of the target within t_test time units?

    Integrates with step dt and returns True at the first grid point whose
    distance to yt is <= tol (t = 0 included).  A non-finite state during
    the integration is reported as failure, not an exception.

    When settle_ftol is set, the test also gives up early once the orbit
    has collapsed onto an equilibrium (||F(y)|| below settle_ftol at two
    consecutive checkpoints without growing) while still outside twice the
    target ball: such an orbit cannot reach the target later.  Pass
    settle_ftol=None to force the full window.
    """
    y = as_state(y0, system.dimension)
    yt = as_state(yt, system.dimension)
    dist = resolve_metric(params.metric, params.metric_weights)
    if dist(y, yt) <= params.tol:
        return True
    n_steps, times = _grid(params.dt, params.t_test)
    if system.fast_first_hit is not None and params.metric == "euclidean":
        hit = system.fast_first_hit(
            y, yt, times, params.tol,
            0.0 if settle_ftol is None else settle_ftol,
        )
        if hit == -2:
            logger.warning(
                "convergence test: state of %r blew up; counting as failure",
                system.name,
            )
        return hit >= 0
    f = system.rhs
    check_every = 200
    prev_fnorm = math.inf
    for k in range(n_steps):
        h = times[k + 1] - times[k]
        k1 = f(y)
        k2 = f(y + (0.5 * h) * k1)
        k3 = f(y + (0.5 * h) * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            logger.warning(
                "convergence test: state of %r blew up at t=%.6g; counting as failure",
                system.name, times[k + 1],
            )
            return False
        if dist(y, yt) <= params.tol:
            return True
        if settle_ftol is not None and (k + 1) % check_every == 0:
            fnorm = float(np.linalg.norm(f(y)))
            if fnorm < settle_ftol and fnorm <= prev_fnorm and dist(y, yt) > 2.0 * params.tol:
                return False
            prev_fnorm = fnorm
    return False


def control(system: DynamicalSystem, y0, yt, cs: ConstraintSet,
            params: ControlParams) -> ControlOutcome:
    """Drive y0 into the target's basin by small eligible perturbations.

    Returns a ControlOutcome whose `iterates` holds the perturbed initial
    state after every applied step (the unperturbed y0 first).  status 0:
    the last iterate passes the convergence test.  status 1: the iteration
    limit was reached, or (with `stalled`) the step solver could not find
    an eligible non-zero step.

    Raises IneligibleStart if y0 itself violates the constraints, and
    NonFiniteState (tagged with the iteration) if an integration blows up.
    """
    started = time.perf_counter()
    y0 = as_state(y0, system.dimension)
    yt = as_state(yt, system.dimension)
    if cs.dimension != system.dimension:
        raise BasinControlError(
            f"constraint set dimension {cs.dimension} does not match system "
            f"dimension {system.dimension}"
        )
    if not is_eligible(cs, y0):
        raise IneligibleStart("initial state violates the constraint set")
    metric_fn = resolve_metric(params.metric, params.metric_weights)
    activation_band = max(cs.feas_tol, params.eps1)

    candidate = y0.copy()
    iterates = [candidate.copy()]
    t_int: list[float] = []
    t_var: list[float] = []
    t_opt: list[float] = []
    status = 1
    stalled = False
    it = 0
    while True:
        test_seconds = None
        if it % params.n_test == 0:
            tic = time.perf_counter()
            converged = test_convergence(system, candidate, yt, params)
            test_seconds = time.perf_counter() - tic
            if converged:
                status = 0
                break
        if it >= params.it_max:
            status = 1
            break

        tic = time.perf_counter()
        try:
            var = integrate_variational(system, candidate, params.dt, params.t_max)
        except NonFiniteState as exc:
            raise NonFiniteState(
                f"iteration {it}: {exc}", step=exc.step, state=exc.state
            ) from exc
        var_seconds = time.perf_counter() - tic

        dists = _distance_profile(var.trajectory, yt, params.metric, params.metric_weights)
        idx = int(np.argmin(dists))

        tic = time.perf_counter()
        lin = linearize(cs, candidate, activation_band)
        solution = solve_increment(IncrementProblem(
            d=var.trajectory.states[idx] - yt, M_star=var.matrices[idx],
            y0=candidate, lin=lin, eps0=params.eps0, eps1=params.eps1,
        ))
        if solution.status == STATUS_STALLED:
            # Degenerate closest approach: when the orbit starts at an
            # equilibrium every grid point ties at the same distance, the
            # earliest-time tie-break yields t*=0 with M=I, and no
            # eligible step can improve the instantaneous distance.  Among
            # exactly tied indices the latest gives the fundamental matrix
            # the longest horizon, so retry once with it before declaring
            # a stall.
            tied = np.flatnonzero(dists == dists[idx])
            last_tied = int(tied[-1])
            if last_tied != idx:
                solution = solve_increment(IncrementProblem(
                    d=var.trajectory.states[last_tied] - yt,
                    M_star=var.matrices[last_tied],
                    y0=candidate, lin=lin, eps0=params.eps0, eps1=params.eps1,
                ))
        opt_seconds = time.perf_counter() - tic

        if solution.status == STATUS_STALLED:
            stalled = True
            status = 1
            break

        candidate = candidate + solution.delta
        if not is_eligible(cs, candidate):
            candidate = _restore_eligibility(cs, candidate, activation_band)
        iterates.append(candidate.copy())
        if test_seconds is not None:
            t_int.append(test_seconds)
        t_var.append(var_seconds)
        t_opt.append(opt_seconds)
        it += 1

    return ControlOutcome(
        status=status,
        stalled=stalled,
        iterates=iterates,
        n_iter=len(iterates) - 1,
        total_seconds=time.perf_counter() - started,
        t_int=t_int,
        t_var=t_var,
        t_opt=t_opt,
    )


def _restore_eligibility(cs: ConstraintSet, y: np.ndarray, band: float,
                         max_rounds: int = 10) -> np.ndarray:
    """Project back onto the constraint set after a curvature violation.

    Linearized steps satisfy nonlinear g/h only to first order; when the
    post-step state drifts beyond feas_tol, re-linearize at the new point
    and project onto the violated halfspaces/hyperplanes until eligible.
    """
    for _ in range(max_rounds):
        y = np.clip(y, cs.lb, cs.ub)
        lin = linearize(cs, y, band)
        for a, g_val in zip(lin.active_ineq_normals, lin.active_ineq_values):
            if g_val > cs.feas_tol:
                denom = a @ a
                if denom > 0.0:
                    y = y - (g_val / denom) * a
        for a, h_val in zip(lin.eq_normals, lin.eq_values):
            if abs(h_val) > cs.feas_tol:
                denom = a @ a
                if denom > 0.0:
                    y = y - (h_val / denom) * a
        if is_eligible(cs, y):
            return y
    raise BasinControlError(
        "could not restore constraint eligibility after a perturbation step; "
        "constraint curvature is too strong for eps1"
    )
