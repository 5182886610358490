import numpy as np
import pytest

from basincontrol import (
    IncrementProblem,
    LinearizedConstraints,
    NonFiniteInput,
    solve_increment,
)


def free_lin(n: int) -> LinearizedConstraints:
    return LinearizedConstraints(
        active_ineq_normals=np.zeros((0, n)),
        active_ineq_values=np.zeros(0),
        eq_normals=np.zeros((0, n)),
        eq_values=np.zeros(0),
        bound_lo=np.full(n, -np.inf),
        bound_hi=np.full(n, np.inf),
    )


def box_lin(lo, hi) -> LinearizedConstraints:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return LinearizedConstraints(
        active_ineq_normals=np.zeros((0, lo.size)),
        active_ineq_values=np.zeros(0),
        eq_normals=np.zeros((0, lo.size)),
        eq_values=np.zeros(0),
        bound_lo=lo,
        bound_hi=hi,
    )


def problem(d, m, lin=None, eps0=1e-3, eps1=0.1):
    d = np.asarray(d, dtype=float)
    m = np.asarray(m, dtype=float)
    if lin is None:
        lin = free_lin(d.size)
    return IncrementProblem(d=d, M_star=m, y0=np.zeros(d.size), lin=lin,
                            eps0=eps0, eps1=eps1)


def brute_force_objective(d, m, lin, eps1, pitch):
    """Dense grid search of ||d + M delta||^2 over the feasible set."""
    axes = []
    for lo, hi in zip(lin.bound_lo, lin.bound_hi):
        lo = max(lo, -eps1)
        hi = min(hi, eps1)
        axes.append(np.arange(lo, hi + pitch / 2, pitch))
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    feasible = np.linalg.norm(pts, axis=1) <= eps1
    feasible &= np.linalg.norm(pts @ m.T, axis=1) <= eps1
    pts = pts[feasible]
    resid = pts @ m.T + d
    return float(np.min(np.sum(resid * resid, axis=1)))


class TestExamples:
    def test_unconstrained_clipped_to_ball(self):
        sol = solve_increment(problem(d=[-1.0, 0.0], m=np.eye(2)))
        assert sol.status == "ok"
        assert sol.delta == pytest.approx([0.1, 0.0], abs=1e-9)
        assert sol.forecast_residual_norm == pytest.approx(0.9, abs=1e-9)

    def test_frozen_descent_direction_stalls(self):
        lin = box_lin([0.0, -np.inf], [0.0, np.inf])
        sol = solve_increment(problem(d=[-1.0, 0.0], m=np.eye(2), lin=lin))
        assert sol.status == "stalled"

    def test_minimum_step_rescale(self):
        sol = solve_increment(problem(d=[-0.0005, 0.0], m=np.eye(2)))
        assert sol.status == "ok"
        assert sol.delta == pytest.approx([0.001, 0.0], abs=1e-9)
        assert np.linalg.norm(sol.delta) == pytest.approx(1e-3, rel=1e-9)

    def test_non_finite_input(self):
        with pytest.raises(NonFiniteInput):
            problem(d=[np.nan, 0.0], m=np.eye(2))

    def test_eps_window_validation(self):
        with pytest.raises(ValueError):
            problem(d=[1.0], m=np.eye(1), eps0=0.1, eps1=0.1)


class TestInvariants:
    def test_descent_at_minimizer(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = rng.integers(2, 5)
            m = rng.normal(size=(n, n))
            d = rng.normal(size=n)
            lo = -rng.uniform(0.005, 0.2, n)
            hi = rng.uniform(0.005, 0.2, n)
            sol = solve_increment(problem(d, m, lin=box_lin(lo, hi)))
            assert sol.pre_rescale_residual_norm <= np.linalg.norm(d) + 1e-12

    def test_feasibility_of_ok_solutions(self):
        rng = np.random.default_rng(12)
        feas_tol = 1e-8
        for _ in range(30):
            n = int(rng.integers(2, 5))
            m = rng.normal(size=(n, n))
            d = rng.normal(size=n) * 2.0
            lo = -rng.uniform(0.005, 0.2, n)
            hi = rng.uniform(0.005, 0.2, n)
            # a halfspace and a hyperplane through the origin stay
            # consistent with delta=0 being feasible
            lin = LinearizedConstraints(
                active_ineq_normals=rng.normal(size=(1, n)),
                active_ineq_values=np.array([-rng.uniform(0.0, 0.01)]),
                eq_normals=rng.normal(size=(1, n)),
                eq_values=np.zeros(1),
                bound_lo=lo,
                bound_hi=hi,
            )
            sol = solve_increment(problem(d, m, lin=lin))
            if sol.status != "ok":
                continue
            delta = sol.delta
            assert np.all(delta >= lo - feas_tol)
            assert np.all(delta <= hi + feas_tol)
            assert lin.active_ineq_normals @ delta <= -lin.active_ineq_values + feas_tol
            assert abs(lin.eq_normals @ delta) <= feas_tol
            assert np.linalg.norm(delta) <= 0.1 * (1 + 1e-9)

    def test_norm_caps_on_minimizer_path(self):
        # When no eps0 rescale happens both caps must hold.
        rng = np.random.default_rng(13)
        for _ in range(20):
            m = rng.normal(size=(3, 3))
            d = rng.normal(size=3) * 3.0
            sol = solve_increment(problem(d, m))
            if sol.pre_rescale_norm >= 1e-3:  # no rescale path
                assert np.linalg.norm(sol.delta) <= 0.1 * (1 + 1e-9)
                assert np.linalg.norm(m @ sol.delta) <= 0.1 * (1 + 1e-9)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            m = rng.normal(size=(3, 3))
            d = rng.normal(size=3)
            lo = -rng.uniform(0.01, 0.3, 3)
            hi = rng.uniform(0.01, 0.3, 3)
            c = 7.3
            sol1 = solve_increment(problem(d, m, lin=box_lin(lo, hi),
                                           eps0=1e-3, eps1=0.1))
            sol2 = solve_increment(problem(c * d, m, lin=box_lin(c * lo, c * hi),
                                           eps0=c * 1e-3, eps1=c * 0.1))
            assert sol1.status == sol2.status
            if sol1.status == "ok":
                assert np.abs(sol2.delta - c * sol1.delta).max() <= 1e-9 * c

    def test_deterministic(self):
        m = np.array([[1.3, -0.2], [0.4, 0.9]])
        d = np.array([-0.7, 0.8])
        a = solve_increment(problem(d, m))
        b = solve_increment(problem(d, m))
        assert (a.delta == b.delta).all()


class TestOracleEquivalence:
    def test_box_only_matches_grid_search(self):
        # 20 random well-conditioned 2-D problems (singular values in
        # [0.5, 2]; the spec'd plain projected-gradient solver with its
        # 500-iteration cap only guarantees convergence for moderately
        # conditioned forecasts).  Grid pitch eps1/200.
        rng = np.random.default_rng(42)
        eps1 = 0.1
        pitch = eps1 / 200.0
        for _ in range(20):
            theta, phi = rng.uniform(0.0, 2.0 * np.pi, 2)
            rot_a = np.array([[np.cos(theta), -np.sin(theta)],
                              [np.sin(theta), np.cos(theta)]])
            rot_b = np.array([[np.cos(phi), -np.sin(phi)],
                              [np.sin(phi), np.cos(phi)]])
            m = rot_a @ np.diag(rng.uniform(0.5, 2.0, 2)) @ rot_b
            d = rng.uniform(-1.5, 1.5, 2)
            lo = -rng.uniform(0.02, 0.2, 2)
            hi = rng.uniform(0.02, 0.2, 2)
            lin = box_lin(lo, hi)
            sol = solve_increment(problem(d, m, lin=lin, eps1=eps1))
            assert sol.pre_rescale_norm >= 1e-3  # oracle compares the minimizer
            best = brute_force_objective(d, m, lin, eps1, pitch)
            assert abs(sol.pre_rescale_residual_norm ** 2 - best) <= 1e-6
