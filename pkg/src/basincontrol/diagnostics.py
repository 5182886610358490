"""Self-checks for a dynamical system: analytic-vs-numeric Jacobian
agreement and second-order accuracy of the variational forecast.

These back the CLI `validate` command and double as negative controls in
tests (a deliberately wrong analytic Jacobian must fail the comparison).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicalSystem, finite_difference_jacobian
from .integrate import integrate_trajectory, integrate_variational

JACOBIAN_TOL = 1e-5
RATIO_BAND = (3.5, 4.5)
# Defects below this are roundoff (e.g. exactly linear systems); the
# quadratic-scaling ratio is meaningless there and counts as a pass.
NEGLIGIBLE_DEFECT = 1e-13

DEFAULT_DELTAS = (1e-3, 5e-4, 2.5e-4)


@dataclass(frozen=True)
class SystemCheckReport:
    max_jacobian_error: float
    jacobian_ok: bool
    defect_ratios: tuple  # per probe: consecutive defect ratios (or None)
    max_defect: float
    tangent_ok: bool

    @property
    def ok(self) -> bool:
        return self.jacobian_ok and self.tangent_ok


def jacobian_discrepancy(system: DynamicalSystem, states) -> float:
    """Max entrywise |analytic - finite difference| over the given states."""
    if system.analytic_jacobian is None:
        return 0.0
    worst = 0.0
    for y in states:
        y = np.asarray(y, dtype=float)
        diff = np.abs(
            np.asarray(system.analytic_jacobian(y), dtype=float)
            - finite_difference_jacobian(system.rhs, y)
        )
        worst = max(worst, float(diff.max()))
    return worst


def tangent_defects(system: DynamicalSystem, y0, direction, t: float, dt: float,
                    deltas=DEFAULT_DELTAS) -> list[float]:
    """Forecast defect ||flow(y0 + delta) - flow(y0) - M delta|| per scale.

    The brute-force flow difference is the oracle; a correct fundamental
    matrix leaves a defect that scales as ||delta||^2.
    """
    y0 = np.asarray(y0, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    var = integrate_variational(system, y0, dt, t)
    base = var.trajectory.states[-1]
    m = var.matrices[-1]
    defects = []
    for scale in deltas:
        d = scale * direction
        perturbed = integrate_trajectory(system, y0 + d, dt, t).states[-1]
        defects.append(float(np.linalg.norm(perturbed - base - m @ d)))
    return defects


def check_system(system: DynamicalSystem, n_points: int = 20, seed: int = 0,
                 state_low: float = -2.0, state_high: float = 2.0,
                 t: float = 1.0, dt: float = 0.01) -> SystemCheckReport:
    """Run both checks at deterministic random states.

    The Jacobian comparison must agree within 1e-5 entrywise; the tangent
    forecast defect must drop by a factor in [3.5, 4.5] when the
    displacement halves (unless the defect itself is at roundoff level,
    as for linear or constant systems).
    """
    rng = np.random.default_rng(seed)
    states = rng.uniform(state_low, state_high, size=(n_points, system.dimension))
    max_jac = jacobian_discrepancy(system, states)

    ratios = []
    max_defect = 0.0
    tangent_ok = True
    for y0 in states[: max(1, n_points // 4)]:
        direction = rng.normal(size=system.dimension)
        defects = tangent_defects(system, y0, direction, t, dt)
        max_defect = max(max_defect, max(defects))
        if max(defects) < NEGLIGIBLE_DEFECT:
            ratios.append(None)
            continue
        pair = tuple(defects[i] / defects[i + 1] for i in range(len(defects) - 1))
        ratios.append(pair)
        if not all(RATIO_BAND[0] <= r <= RATIO_BAND[1] for r in pair):
            tangent_ok = False
    return SystemCheckReport(
        max_jacobian_error=max_jac,
        jacobian_ok=max_jac <= JACOBIAN_TOL,
        defect_ratios=tuple(ratios),
        max_defect=max_defect,
        tangent_ok=tangent_ok,
    )
