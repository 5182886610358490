"""Eligible-perturbation region: box bounds plus general g(y) <= 0, h(y) = 0.

A state is eligible when it satisfies every box bound, every inequality
component, and every equality component, all within a small feasibility
slack `feas_tol` (equality constraints are meaningless in floating point
without one).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import finite_difference_jacobian
from .errors import DimensionMismatch, NonFiniteOutput

DEFAULT_FEAS_TOL = 1e-8


@dataclass(frozen=True)
class ConstraintSet:
    """Box bounds lb/ub (entries may be +-inf) plus optional g, h maps.

    g maps a state to a length-p vector, eligible iff <= 0 componentwise;
    h maps a state to a length-q vector, eligible iff = 0 componentwise.
    """

    lb: np.ndarray
    ub: np.ndarray
    g: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    h: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    feas_tol: float = DEFAULT_FEAS_TOL

    def __post_init__(self):
        lb = np.asarray(self.lb, dtype=float)
        ub = np.asarray(self.ub, dtype=float)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)
        if lb.shape != ub.shape or lb.ndim != 1:
            raise DimensionMismatch(
                f"lb/ub must be 1-D vectors of equal length, got {lb.shape} and {ub.shape}"
            )
        if np.any(lb > ub):
            bad = int(np.argmax(lb > ub))
            raise ValueError(f"lb[{bad}]={lb[bad]} exceeds ub[{bad}]={ub[bad]}")
        if not self.feas_tol > 0:
            raise ValueError(f"feas_tol must be positive, got {self.feas_tol}")

    @property
    def dimension(self) -> int:
        return self.lb.size


def unconstrained(n: int, feas_tol: float = DEFAULT_FEAS_TOL) -> ConstraintSet:
    """A constraint set that admits every finite state of dimension n."""
    return ConstraintSet(lb=np.full(n, -np.inf), ub=np.full(n, np.inf), feas_tol=feas_tol)


@dataclass(frozen=True)
class LinearizedConstraints:
    """Local linear model of the constraint region around a point y.

    active_ineq_normals : rows grad g_a for near-active inequality rows
    active_ineq_values : the corresponding g_a(y)
    eq_normals / eq_values : rows grad h_b and h_b(y) for all equalities
    bound_lo / bound_hi : displacement bounds lb - y and ub - y
    """

    active_ineq_normals: np.ndarray
    active_ineq_values: np.ndarray
    eq_normals: np.ndarray
    eq_values: np.ndarray
    bound_lo: np.ndarray
    bound_hi: np.ndarray


def _eval_map(fn, y, label):
    out = np.atleast_1d(np.asarray(fn(y), dtype=float))
    if out.ndim != 1:
        raise DimensionMismatch(f"{label}(y) must return a 1-D vector, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutput(f"{label}(y) non-finite at y={y}")
    return out


def is_eligible(cs: ConstraintSet, y) -> bool:
    """True iff y satisfies box, g <= 0, and h = 0 within feas_tol."""
    y = np.asarray(y, dtype=float)
    if y.shape != cs.lb.shape:
        raise DimensionMismatch(f"state shape {y.shape} does not match bounds {cs.lb.shape}")
    tol = cs.feas_tol
    if np.any(y < cs.lb - tol) or np.any(y > cs.ub + tol):
        return False
    if cs.g is not None and np.any(_eval_map(cs.g, y, "g") > tol):
        return False
    if cs.h is not None and np.any(np.abs(_eval_map(cs.h, y, "h")) > tol):
        return False
    return True


def linearize(cs: ConstraintSet, y, activation_band: float = 1e-3) -> LinearizedConstraints:
    """Linear model of the constraints at y for the increment subproblem.

    Gradients of g and h use the same central-difference rule as the
    system Jacobian.  Inequality rows enter only when near-active,
    g_a(y) >= -activation_band; far-from-active rows cannot bind for a
    small step and are dropped for conditioning.  Box bounds are
    translated to displacement bounds relative to y.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != cs.lb.shape:
        raise DimensionMismatch(f"state shape {y.shape} does not match bounds {cs.lb.shape}")
    n = y.size
    if cs.g is not None:
        gv = _eval_map(cs.g, y, "g")
        grads = finite_difference_jacobian(lambda z: np.atleast_1d(cs.g(z)), y)
        active = gv >= -activation_band
        ineq_normals = grads[active]
        ineq_values = gv[active]
    else:
        ineq_normals = np.zeros((0, n))
        ineq_values = np.zeros(0)
    if cs.h is not None:
        hv = _eval_map(cs.h, y, "h")
        eq_normals = finite_difference_jacobian(lambda z: np.atleast_1d(cs.h(z)), y)
        eq_values = hv
    else:
        eq_normals = np.zeros((0, n))
        eq_values = np.zeros(0)
    if not (np.all(np.isfinite(ineq_normals)) and np.all(np.isfinite(eq_normals))):
        raise NonFiniteOutput("constraint gradient non-finite")
    return LinearizedConstraints(
        active_ineq_normals=ineq_normals,
        active_ineq_values=ineq_values,
        eq_normals=eq_normals,
        eq_values=eq_values,
        bound_lo=cs.lb - y,
        bound_hi=cs.ub - y,
    )
