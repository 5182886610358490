"""Benchmark instances on bistable networks, success-rate suites, and
runtime-vs-dimension scaling.

Instances are built witness-first: sample a state known to lie in the
target's basin and reachable under the constraints, then displace it to
form the initial state.  That makes the existence of a valid compensatory
perturbation constructive and independently checkable.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet, is_eligible
from .controller import ControlOutcome, ControlParams, control, test_convergence
from .dynamics import DynamicalSystem, build_system, evaluate_rhs
from .errors import GenerationFailed

DEFAULT_COUPLING = 0.05
DEFAULT_BOX_HALFWIDTH = 2.0
DEFAULT_WITNESS_NOISE = 0.3
DEFAULT_FLIP_RANGE = (-1.2, -0.8)
DEFAULT_MAX_FLIPS = 4
DEFAULT_MAX_ATTEMPTS = 100


def default_suite_params(it_max: int = 2000) -> ControlParams:
    """Control parameters used by the standard benchmark suite."""
    return ControlParams(
        eps0=1e-3, eps1=5e-2, it_max=it_max,
        t_max=10.0, dt=0.01, t_test=100.0, tol=1e-2,
    )


@dataclass(frozen=True, eq=False)
class BenchInstance:
    """A solvable control problem on a bistable network.

    `witness` is an eligible state verified to lie in the target's basin,
    certifying that the instance admits a compensatory perturbation.  The
    instance holds plain data (arrays, scalars) so it can cross process
    boundaries; `system()` and `constraint_set()` rebuild the live objects.
    """

    seed: int
    n: int
    coupling: float
    edges: tuple
    y0: np.ndarray
    yt: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    witness: np.ndarray

    def system(self) -> DynamicalSystem:
        return build_system("bistable_network", (self.coupling, self.n), self.edges)

    def constraint_set(self) -> ConstraintSet:
        return ConstraintSet(lb=self.lb, ub=self.ub)


@dataclass(frozen=True)
class ScalingReport:
    dimensions: tuple
    mean_seconds: tuple
    stddev_seconds: tuple
    fitted_exponent: float


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def _random_connected_graph(n: int, rng: np.random.Generator, max_tries: int = 1000):
    """Erdos-Renyi graph with edge probability min(1, 4/n), retried until
    connected."""
    p = min(1.0, 4.0 / n)
    for _ in range(max_tries):
        upper = rng.random((n, n)) < p
        adj = np.triu(upper, k=1)
        adj = adj | adj.T
        if _connected(adj):
            ii, jj = np.nonzero(np.triu(adj, k=1))
            return tuple((int(i), int(j)) for i, j in zip(ii, jj))
    raise GenerationFailed(f"no connected graph on n={n} nodes in {max_tries} draws")


def generate_instance(n: int, seed: int, params: ControlParams | None = None,
                      coupling: float = DEFAULT_COUPLING,
                      box_halfwidth: float = DEFAULT_BOX_HALFWIDTH,
                      witness_noise: float = DEFAULT_WITNESS_NOISE,
                      flip_range: tuple = DEFAULT_FLIP_RANGE,
                      max_flips: int = DEFAULT_MAX_FLIPS,
                      max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> BenchInstance:
    """Generate a solvable instance on a random connected bistable network.

    The target is the all-ones fixed point.  A random subset of ceil(n/2)
    nodes may be perturbed within +-box_halfwidth of y0; the rest are
    frozen.  The witness is the target plus componentwise noise, accepted
    only if it converges to the target; y0 flips a random nonempty subset
    of the perturbable nodes (1 to max_flips of them) to values near -1,
    accepted only if it does NOT converge to the target and the witness
    stays reachable.  The flip count is capped because each flipped node
    keeps the witness reachable only with probability ~1/2, so large flip
    sets would make generation fail for large n.  Retries with fresh noise
    up to max_attempts, then raises GenerationFailed.
    """
    if n < 2:
        raise GenerationFailed(f"need n >= 2, got n={n}")
    if params is None:
        params = default_suite_params()
    rng = np.random.default_rng(seed)
    edges = _random_connected_graph(n, rng)
    system = build_system("bistable_network", (coupling, n), edges)
    yt = np.ones(n)
    resid = np.linalg.norm(evaluate_rhs(system, yt))
    if resid > 1e-8:
        raise GenerationFailed(f"target is not a fixed point: ||rhs(yt)||={resid:.3e}")

    n_free = math.ceil(n / 2)
    free = np.sort(rng.choice(n, size=n_free, replace=False))

    for _ in range(max_attempts):
        witness = yt + rng.uniform(-witness_noise, witness_noise, size=n)
        if not test_convergence(system, witness, yt, params):
            continue
        n_flips = int(rng.integers(1, min(n_free, max_flips) + 1))
        flipped = rng.choice(free, size=n_flips, replace=False)
        y0 = witness.copy()
        y0[flipped] = rng.uniform(flip_range[0], flip_range[1], size=flipped.size)
        lb = y0.copy()
        ub = y0.copy()
        lb[free] = y0[free] - box_halfwidth
        ub[free] = y0[free] + box_halfwidth
        cs = ConstraintSet(lb=lb, ub=ub)
        if not is_eligible(cs, witness):
            continue
        if test_convergence(system, y0, yt, params):
            continue
        return BenchInstance(
            seed=seed, n=n, coupling=coupling, edges=edges,
            y0=y0, yt=yt, lb=lb, ub=ub, witness=witness,
        )
    raise GenerationFailed(
        f"no valid instance for n={n}, seed={seed} in {max_attempts} attempts"
    )


def _run_instance(args) -> tuple:
    instance, params = args
    tic = time.perf_counter()
    outcome = control(instance.system(), instance.y0, instance.yt,
                      instance.constraint_set(), params)
    return outcome, time.perf_counter() - tic


@dataclass
class SuiteResult:
    instances: list
    outcomes: list
    seconds: list

    @property
    def success_count(self) -> int:
        return sum(1 for o in self.outcomes if o.status == 0)

    @property
    def success_fraction(self) -> float:
        return self.success_count / len(self.outcomes)


def run_suite(instances, params: ControlParams, workers: int = 1) -> SuiteResult:
    """Run the controller on every instance; failures are data, not errors."""
    if not instances:
        raise ValueError("run_suite needs at least one instance")
    jobs = [(inst, params) for inst in instances]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_instance, jobs))
    else:
        results = [_run_instance(job) for job in jobs]
    return SuiteResult(
        instances=list(instances),
        outcomes=[r[0] for r in results],
        seconds=[r[1] for r in results],
    )


def _scaling_job(args) -> float:
    n, seed, params, control_fn = args
    instance = generate_instance(n, seed, params)
    tic = time.perf_counter()
    control_fn(instance.system(), instance.y0, instance.yt,
               instance.constraint_set(), params)
    return time.perf_counter() - tic


def fit_exponent(dims, runtimes) -> float:
    """Least-squares slope of log(runtime) against log(n)."""
    logs_n = np.log(np.asarray(dims, dtype=float))
    logs_t = np.log(np.asarray(runtimes, dtype=float))
    slope, _ = np.polyfit(logs_n, logs_t, 1)
    return float(slope)


def run_scaling(dims, seeds_per_dim: int, params: ControlParams,
                workers: int = 1, control_fn=control) -> ScalingReport:
    """Mean control runtime per dimension plus a log-log exponent fit.

    Generation time is excluded; only the control call is timed.  Seeds
    1..seeds_per_dim are reused across dimensions so instances are
    reproducible.
    """
    dims = tuple(int(n) for n in dims)
    if len(dims) < 3:
        raise ValueError("run_scaling needs at least 3 dimensions for a fit")
    jobs = [(n, seed, params, control_fn)
            for n in dims for seed in range(1, seeds_per_dim + 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            seconds = list(pool.map(_scaling_job, jobs))
    else:
        seconds = [_scaling_job(job) for job in jobs]
    seconds = np.asarray(seconds).reshape(len(dims), seeds_per_dim)
    means = seconds.mean(axis=1)
    stds = seconds.std(axis=1)
    return ScalingReport(
        dimensions=dims,
        mean_seconds=tuple(float(v) for v in means),
        stddev_seconds=tuple(float(v) for v in stds),
        fitted_exponent=fit_exponent(dims, means),
    )


def write_suite_report(result: SuiteResult, path) -> None:
    """Suite report JSON: instance descriptors, success fraction, and
    per-instance outcome rows."""
    doc = {
        "instances": [
            {"seed": inst.seed, "n": inst.n, "n_edges": len(inst.edges)}
            for inst in result.instances
        ],
        "success_fraction": result.success_fraction,
        "per_instance": [
            {
                "seed": inst.seed,
                "n": inst.n,
                "status": outcome.status,
                "n_iter": outcome.n_iter,
                "seconds": seconds,
            }
            for inst, outcome, seconds in zip(
                result.instances, result.outcomes, result.seconds
            )
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_scaling_reports(report: ScalingReport, json_path, csv_path) -> None:
    """Scaling reports: CSV `n,mean_seconds,stddev_seconds` plus a JSON
    summary carrying the fitted exponent."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "mean_seconds", "stddev_seconds"])
        for n, mean, std in zip(report.dimensions, report.mean_seconds,
                                report.stddev_seconds):
            writer.writerow([n, f"{mean:.17g}", f"{std:.17g}"])
    doc = {
        "dimensions": list(report.dimensions),
        "mean_seconds": list(report.mean_seconds),
        "stddev_seconds": list(report.stddev_seconds),
        "fitted_exponent": report.fitted_exponent,
    }
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
