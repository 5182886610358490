"""Autonomous ODE systems: evaluation, Jacobians, and the bundled model registry.

A system is a map F(y) from an n-dimensional state to its time derivative,
with no explicit time dependence.  Non-autonomous dynamics must be reduced
by the caller (append a dummy clock variable with derivative 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _network_kernels as kernels
from .errors import (
    BadTopology,
    DimensionMismatch,
    NonFiniteInput,
    NonFiniteOutput,
    ParseError,
    UnknownModel,
)

# Central-difference step scale: sqrt(machine epsilon), applied per component.
_FD_STEP = float(np.sqrt(np.finfo(float).eps))


def as_state(values, dim: Optional[int] = None) -> np.ndarray:
    """Validate and return a state vector as a float ndarray.

    Requires a finite 1-D vector of length >= 1; raises DimensionMismatch
    if `dim` is given and does not match.
    """
    y = np.asarray(values, dtype=float)
    if y.ndim != 1 or y.size < 1:
        raise DimensionMismatch(f"state must be a 1-D vector, got shape {y.shape}")
    if dim is not None and y.size != dim:
        raise DimensionMismatch(f"state has length {y.size}, expected {dim}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput(f"state contains non-finite entries: {y}")
    return y


@dataclass(frozen=True)
class DynamicalSystem:
    """An autonomous ODE system y' = rhs(y).

    Attributes
    ----------
    name : identifier for reports and errors
    dimension : number of state variables n
    params : ordered tuple of model parameters (kept for provenance;
        already bound into `rhs`/`analytic_jacobian` closures)
    rhs : map from state (n,) to derivative (n,)
    analytic_jacobian : optional map from state to the n x n matrix
        J[i, j] = d rhs[i] / d y[j]; when absent a central finite
        difference is used.

    Bundled models may additionally supply compiled integration hooks;
    the integrator and the convergence test use them when present and
    fall back to the generic path otherwise.  Each hook must reproduce
    the generic semantics on the same grid:

    fast_trajectory(y0, times) -> (states, bad_step)
    fast_variational(y0, times) -> (states, matrices, bad_step)
    fast_first_hit(y0, yt, times, tol, settle_ftol) -> index
        (first grid index within tol of yt under the Euclidean metric,
        -1 for no hit, -2 for a blow-up; bad_step is -1 when clean)
    """

    name: str
    dimension: int
    rhs: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    params: tuple = ()
    analytic_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False
    )
    fast_trajectory: Optional[Callable] = field(default=None, repr=False)
    fast_variational: Optional[Callable] = field(default=None, repr=False)
    fast_first_hit: Optional[Callable] = field(default=None, repr=False)


def evaluate_rhs(system: DynamicalSystem, y) -> np.ndarray:
    """Evaluate the derivative F(y).

    Returns a length-n finite vector.  Raises DimensionMismatch if `y` has
    the wrong length, NonFiniteOutput if the model returns NaN/Inf (a sign
    of blow-up or bad parameters).
    """
    y = as_state(y, system.dimension)
    out = np.asarray(system.rhs(y), dtype=float)
    if out.shape != (system.dimension,):
        raise DimensionMismatch(
            f"rhs of {system.name!r} returned shape {out.shape}, "
            f"expected ({system.dimension},)"
        )
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutput(f"rhs of {system.name!r} non-finite at y={y}")
    return out


def finite_difference_jacobian(fn: Callable[[np.ndarray], np.ndarray], y: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of a vector map at y.

    Step per component: sqrt(machine_eps) * max(1, |y_j|).  Second-order
    accurate and scale-aware; shared by system Jacobians and constraint
    gradients so both see the same stepping rule.
    """
    y = np.asarray(y, dtype=float)
    f0 = np.asarray(fn(y), dtype=float)
    jac = np.empty((f0.size, y.size))
    for j in range(y.size):
        h = _FD_STEP * max(1.0, abs(y[j]))
        yp = y.copy()
        ym = y.copy()
        yp[j] += h
        ym[j] -= h
        jac[:, j] = (np.asarray(fn(yp), dtype=float) - np.asarray(fn(ym), dtype=float)) / (2.0 * h)
    return jac


def jacobian(system: DynamicalSystem, y) -> np.ndarray:
    """Jacobian matrix J[i, j] = d rhs[i] / d y[j] at state y.

    Uses the model's analytic Jacobian when supplied, otherwise central
    finite differences on `rhs`.
    """
    y = as_state(y, system.dimension)
    if system.analytic_jacobian is not None:
        jac = np.asarray(system.analytic_jacobian(y), dtype=float)
    else:
        jac = finite_difference_jacobian(system.rhs, y)
    if jac.shape != (system.dimension, system.dimension):
        raise DimensionMismatch(
            f"Jacobian of {system.name!r} has shape {jac.shape}, "
            f"expected ({system.dimension}, {system.dimension})"
        )
    if not np.all(np.isfinite(jac)):
        raise NonFiniteOutput(f"Jacobian of {system.name!r} non-finite at y={y}")
    return jac


def _double_well_particle(gamma: float) -> DynamicalSystem:
    # Damped particle in the quartic bistable potential U(x) = x^4/4 - x^2/2:
    # x' = v, v' = -gamma*v + x - x^3.  Stable fixed points (+-1, 0),
    # unstable saddle (0, 0).
    gamma = float(gamma)

    def rhs(y):
        x, v = y
        return np.array([v, -gamma * v + x - x * x * x])

    def jac(y):
        x = y[0]
        return np.array([[0.0, 1.0], [1.0 - 3.0 * x * x, -gamma]])

    return DynamicalSystem(
        name="double_well_particle",
        dimension=2,
        params=(gamma,),
        rhs=rhs,
        analytic_jacobian=jac,
    )


def _bistable_network(k: float, n: int, edges) -> DynamicalSystem:
    # n diffusively coupled bistable units:
    #   y_i' = y_i - y_i^3 + k * sum_j A_ij (y_j - y_i)
    # with A the (undirected) adjacency matrix from `edges`.
    k = float(k)
    n = int(n)
    if n < 1:
        raise ValueError(f"bistable_network needs n >= 1, got {n}")
    adj = np.zeros((n, n))
    for i, j in edges or ():
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n):
            raise BadTopology(f"edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise BadTopology(f"self-loop ({i}, {j}) not allowed")
        adj[i, j] = 1.0
        adj[j, i] = 1.0
    deg = adj.sum(axis=1)

    def rhs(y):
        return y - y**3 + k * (adj @ y - deg * y)

    def jac(y):
        out = k * adj.copy()
        out[np.diag_indices(n)] = 1.0 - 3.0 * y * y - k * deg
        return out

    hooks = {}
    if kernels.NUMBA_AVAILABLE:
        hooks = {
            "fast_trajectory": lambda y0, times: kernels.trajectory_kernel(
                y0, times, adj, deg, k),
            "fast_variational": lambda y0, times: kernels.variational_kernel(
                y0, times, adj, deg, k),
            "fast_first_hit": lambda y0, yt, times, tol, settle: (
                kernels.first_hit_kernel(y0, yt, times, tol, settle, adj, deg, k)),
        }
    return DynamicalSystem(
        name="bistable_network",
        dimension=n,
        params=(k, n),
        rhs=rhs,
        analytic_jacobian=jac,
        **hooks,
    )


def build_system(name: str, params: Sequence = (), topology=None) -> DynamicalSystem:
    """Build a bundled model by name.

    Models
    ------
    double_well_particle : params (gamma,); 2-D state (x, v) with
        x' = v, v' = -gamma*v + x - x^3.  No topology.
    bistable_network : params (k, n); n-D state with per-node bistable
        dynamics y_i - y_i^3 plus diffusive coupling of strength k over
        the undirected edge list `topology` (pairs of 0-based indices).

    Raises UnknownModel for unrecognised names and BadTopology for edge
    indices outside [0, n).
    """
    params = tuple(params)
    if name == "double_well_particle":
        if topology is not None:
            raise BadTopology("double_well_particle takes no topology")
        gamma = params[0] if params else 1.0
        return _double_well_particle(gamma)
    if name == "bistable_network":
        if len(params) != 2:
            raise ValueError("bistable_network needs params (k, n)")
        k, n = params
        return _bistable_network(k, int(n), topology)
    raise UnknownModel(f"unknown model {name!r}")


def load_edge_list(path) -> list[tuple[int, int]]:
    """Read an edge list file: one `i j` pair per line, 0-based indices.

    Blank lines and lines starting with `#` are ignored; fields are
    whitespace-separated.
    """
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected `i j`, got {stripped!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer node index") from exc
            edges.append((i, j))
    return edges
