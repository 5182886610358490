"""Fixed-step RK4 integration of trajectories and of the variational equation.

The variational pass co-integrates y' = F(y) and M' = J(y) M with M(0) = I,
so each M(t_k) is exactly the Jacobian of the discrete RK4 flow map: M(t) d
forecasts where an infinitesimal initial displacement d ends up at time t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicalSystem, as_state, finite_difference_jacobian
from .errors import NonFiniteState


@dataclass(frozen=True)
class Trajectory:
    """States on the uniform grid t_k = k*dt (last step shortened to t_end).

    times : shape (K+1,), times[0] = 0, times[-1] = t_end exactly
    states : shape (K+1, n)
    """

    times: np.ndarray
    states: np.ndarray

    @property
    def dimension(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class VariationalResult:
    """Trajectory plus the fundamental matrix M(t_k) at every grid point."""

    trajectory: Trajectory
    matrices: np.ndarray  # shape (K+1, n, n); matrices[0] is the identity


def _grid(dt: float, t_end: float):
    """Number of steps and step sizes for the [0, t_end] grid.

    K = ceil(t_end/dt) steps of size dt, with the final step shortened so
    the last grid point equals t_end exactly (no overshoot).
    """
    if not (math.isfinite(dt) and math.isfinite(t_end)):
        raise ValueError("dt and t_end must be finite")
    if dt <= 0.0 or t_end <= 0.0:
        raise ValueError(f"dt and t_end must be positive, got dt={dt}, t_end={t_end}")
    if dt > t_end:
        raise ValueError(f"dt={dt} exceeds t_end={t_end}")
    # Tolerate roundoff in t_end/dt so exact multiples do not gain a step.
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    n_steps = max(n_steps, 1)
    times = np.arange(n_steps + 1) * dt
    times[-1] = t_end
    return n_steps, times


def integrate_trajectory(system: DynamicalSystem, y0, dt: float, t_end: float) -> Trajectory:
    """Integrate y' = F(y) from y0 over [0, t_end] with classical RK4.

    Fixed step dt; the final step is shortened so the last sample lands on
    t_end exactly.  Raises NonFiniteState (with the step index) if the
    state blows up; the caller should reduce dt or the window.
    """
    y = as_state(y0, system.dimension)
    n_steps, times = _grid(dt, t_end)
    if system.fast_trajectory is not None:
        states, bad_step = system.fast_trajectory(y, times)
        if bad_step >= 0:
            raise NonFiniteState(
                f"state of {system.name!r} non-finite at step {bad_step} "
                f"(t={times[bad_step]:.6g})",
                step=bad_step,
                state=states[bad_step - 1],
            )
        return Trajectory(times=times, states=states)
    f = system.rhs
    states = np.empty((n_steps + 1, y.size))
    states[0] = y
    for k in range(n_steps):
        h = times[k + 1] - times[k]
        k1 = f(y)
        k2 = f(y + (0.5 * h) * k1)
        k3 = f(y + (0.5 * h) * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(
                f"state of {system.name!r} non-finite at step {k + 1} "
                f"(t={times[k + 1]:.6g})",
                step=k + 1,
                state=y,
            )
        states[k + 1] = y
    return Trajectory(times=times, states=states)


def integrate_variational(system: DynamicalSystem, y0, dt: float, t_end: float) -> VariationalResult:
    """Co-integrate the trajectory and the fundamental matrix over [0, t_end].

    Applies the same RK4 stepping to the augmented system
    (y', M') = (F(y), J(y) M) with M(0) = I.  The returned matrices[k] maps
    an infinitesimal displacement of y0 to its displacement at t_k.
    """
    y = as_state(y0, system.dimension)
    n = y.size
    n_steps, times = _grid(dt, t_end)
    if system.fast_variational is not None:
        states, matrices, bad_step = system.fast_variational(y, times)
        if bad_step >= 0:
            raise NonFiniteState(
                f"variational state of {system.name!r} non-finite at step "
                f"{bad_step} (t={times[bad_step]:.6g})",
                step=bad_step,
                state=states[bad_step - 1],
            )
        return VariationalResult(
            trajectory=Trajectory(times=times, states=states), matrices=matrices
        )
    f = system.rhs
    if system.analytic_jacobian is not None:
        jac = system.analytic_jacobian
    else:
        jac = lambda state: finite_difference_jacobian(f, state)  # noqa: E731
    states = np.empty((n_steps + 1, n))
    matrices = np.empty((n_steps + 1, n, n))
    states[0] = y
    m = np.eye(n)
    matrices[0] = m
    for k in range(n_steps):
        h = times[k + 1] - times[k]
        k1y = f(y)
        k1m = jac(y) @ m

        y2 = y + (0.5 * h) * k1y
        k2y = f(y2)
        k2m = jac(y2) @ (m + (0.5 * h) * k1m)

        y3 = y + (0.5 * h) * k2y
        k3y = f(y3)
        k3m = jac(y3) @ (m + (0.5 * h) * k2m)

        y4 = y + h * k3y
        k4y = f(y4)
        k4m = jac(y4) @ (m + h * k3m)

        y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        m = m + (h / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(m))):
            raise NonFiniteState(
                f"variational state of {system.name!r} non-finite at step {k + 1} "
                f"(t={times[k + 1]:.6g})",
                step=k + 1,
                state=y,
            )
        states[k + 1] = y
        matrices[k + 1] = m
    return VariationalResult(
        trajectory=Trajectory(times=times, states=states), matrices=matrices
    )


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Dump a trajectory as CSV: header `t, y0, ..., y{n-1}`, one row per step.

    Values carry 17 significant digits so they round-trip to the exact
    double.
    """
    n = traj.dimension
    header = ", ".join(["t"] + [f"y{i}" for i in range(n)])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, y in zip(traj.times, traj.states):
            row = ", ".join(f"{v:.17g}" for v in np.concatenate(([t], y)))
            fh.write(row + "\n")
