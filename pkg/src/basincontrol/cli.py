"""Command-line entry point.

Subcommands
-----------
control <config>   run the controller on a configured problem
bench <config>     run a benchmark suite or a runtime-scaling sweep
validate <config>  self-check a model (Jacobian + variational forecast)

Exit codes: 0 success, 1 the run/check failed (iteration limit, stall,
threshold violation), 2 configuration or I/O error.  Once a control run
has started, errors are reported as exit 1, never 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import yaml

from . import __version__
from .bench import (
    default_suite_params,
    generate_instance,
    run_scaling,
    run_suite,
    write_scaling_reports,
    write_suite_report,
)
from .config import CONTROL_DEFAULTS, parse_config
from .controller import ControlOutcome, ControlParams, control
from .diagnostics import check_system
from .dynamics import build_system, load_edge_list
from .errors import BasinControlError, GenerationFailed, ParseError, ValidationError
from .integrate import integrate_trajectory, write_trajectory_csv


def _ensure_writable(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "a"):
        pass


def _control_report_doc(outcome: ControlOutcome, verbosity: str):
    if verbosity == "lean":
        return [float(v) for v in outcome.final_state]
    return {
        "status": outcome.status,
        "stall": outcome.stalled,
        "n_iter": outcome.n_iter,
        "time": outcome.total_seconds,
        "t_int": list(outcome.t_int),
        "t_var": list(outcome.t_var),
        "t_opt": list(outcome.t_opt),
        "y0": [[float(v) for v in state] for state in outcome.iterates],
    }


def _write_json(doc, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def cmd_control(args) -> int:
    try:
        config = parse_config(args.config)
        if args.output:
            config.output.report = args.output
        if args.verbosity:
            config.output.verbosity = args.verbosity
        system = config.build_system()
        cs = config.constraint_set()
        params = config.control_params()
        _ensure_writable(config.output.report)
        if config.output.trajectory:
            _ensure_writable(config.output.trajectory)
    except (ParseError, ValidationError, BasinControlError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        outcome = control(system, np.asarray(config.y0), np.asarray(config.yt),
                          cs, params)
    except BasinControlError as exc:
        # The run itself failed (ineligible start, blow-up); by contract
        # this is a failed run, not a config error.
        print(f"control run failed: {exc}", file=sys.stderr)
        return 1

    _write_json(_control_report_doc(outcome, config.output.verbosity),
                config.output.report)
    if config.output.trajectory:
        traj = integrate_trajectory(system, outcome.final_state,
                                    params.dt, params.t_test)
        write_trajectory_csv(traj, config.output.trajectory)
    print(f"status={outcome.status} stall={outcome.stalled} "
          f"n_iter={outcome.n_iter} time={outcome.total_seconds:.3f}s "
          f"report={config.output.report}")
    return 0 if outcome.status == 0 else 1


def _load_yaml(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ParseError(f"{path}: malformed YAML{where}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    return doc


def _bench_params(doc: dict) -> ControlParams:
    fields = dict(CONTROL_DEFAULTS)
    fields.update({"eps1": 5e-2, "it_max": 2000})  # suite defaults
    fields.update(doc.get("control", {}) or {})
    for key in ("eps0", "eps1", "t_max", "dt", "t_test", "tol"):
        fields[key] = float(fields[key])
    for key in ("it_max", "n_test"):
        fields[key] = int(fields[key])
    try:
        return ControlParams(**fields)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc


def _seed_list(raw) -> list[int]:
    if isinstance(raw, dict):
        lo, hi = int(raw["from"]), int(raw["to"])
        return list(range(lo, hi + 1))
    return [int(s) for s in raw]


def cmd_bench(args) -> int:
    try:
        doc = _load_yaml(args.config)
        mode = doc.get("mode", "suite")
        params = _bench_params(doc)
        gen_kwargs = dict(doc.get("generator", {}) or {})
        out_doc = doc.get("output", {}) or {}
        report_path = args.output or out_doc.get("report")
        workers = args.threads
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if mode == "suite":
        try:
            seeds = _seed_list(doc.get("seeds", {"from": 1, "to": 30}))
            n = int(doc.get("n", 10))
            report_path = report_path or "suite_report.json"
            _ensure_writable(report_path)
            instances = [generate_instance(n, seed, params, **gen_kwargs)
                         for seed in seeds]
        except (GenerationFailed, ValidationError, TypeError, KeyError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        result = run_suite(instances, params, workers=workers)
        write_suite_report(result, report_path)
        print(f"suite: {result.success_count}/{len(instances)} succeeded "
              f"(fraction {result.success_fraction:.3f}) report={report_path}")
        return 0

    if mode == "scaling":
        try:
            dims = [int(v) for v in doc.get("dims", [8, 16, 32, 64])]
            seeds_per_dim = int(doc.get("seeds_per_dim", 5))
            report_path = report_path or "scaling_report.json"
            csv_path = os.path.splitext(report_path)[0] + ".csv"
            _ensure_writable(report_path)
            _ensure_writable(csv_path)
            report = run_scaling(dims, seeds_per_dim, params, workers=workers)
        except (GenerationFailed, ValidationError, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        write_scaling_reports(report, report_path, csv_path)
        print(f"scaling: dims={list(report.dimensions)} "
              f"mean_seconds={[round(v, 4) for v in report.mean_seconds]} "
              f"fitted_exponent={report.fitted_exponent:.3f} "
              f"report={report_path}")
        return 0

    print(f"error: unknown bench mode {mode!r} (use 'suite' or 'scaling')",
          file=sys.stderr)
    return 2


def cmd_validate(args) -> int:
    try:
        doc = _load_yaml(args.config)
        model_doc = doc.get("model")
        if not isinstance(model_doc, dict) or "name" not in model_doc:
            raise ValidationError("config needs a model mapping with a 'name'")
        name = model_doc["name"]
        raw_params = dict(model_doc.get("params", {}) or {})
        if name == "double_well_particle":
            params = (float(raw_params.get("gamma", 1.0)),)
        elif name == "bistable_network":
            params = (float(raw_params["k"]), int(raw_params["n"]))
        else:
            raise ValidationError(f"unknown model {name!r}")
        topology = None
        if model_doc.get("topology"):
            base = os.path.dirname(os.path.abspath(args.config))
            topology = load_edge_list(os.path.join(base, model_doc["topology"]))
        system = build_system(name, params, topology)
        knobs = dict(doc.get("validate", {}) or {})
    except (ParseError, ValidationError, BasinControlError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    report = check_system(
        system,
        n_points=int(knobs.get("n_points", 20)),
        seed=int(knobs.get("seed", 0)),
        t=float(knobs.get("t", 1.0)),
        dt=float(knobs.get("dt", 0.01)),
    )
    print(f"max Jacobian discrepancy: {report.max_jacobian_error:.3e} "
          f"({'ok' if report.jacobian_ok else 'FAIL'}, tol 1e-05)")
    print(f"max tangent-forecast defect: {report.max_defect:.3e}; "
          f"quadratic-scaling ratios {'ok' if report.tangent_ok else 'FAIL'} "
          f"(band [3.5, 4.5])")
    if args.output:
        _write_json({
            "max_jacobian_error": report.max_jacobian_error,
            "jacobian_ok": report.jacobian_ok,
            "max_defect": report.max_defect,
            "tangent_ok": report.tangent_ok,
        }, args.output)
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="basincontrol",
        description="Steer a nonlinear dynamical system into the basin of "
                    "attraction of a target state via constrained "
                    "perturbations of its initial condition.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_control = sub.add_parser("control", help="run the controller on a config")
    p_control.add_argument("config", help="YAML run configuration")
    p_control.add_argument("--output", help="override the report path")
    p_control.add_argument("--verbosity", choices=("lean", "full"),
                           help="lean: final state only; full: rich report")
    p_control.set_defaults(func=cmd_control)

    p_bench = sub.add_parser("bench", help="run a benchmark suite or scaling sweep")
    p_bench.add_argument("config", help="YAML bench configuration")
    p_bench.add_argument("--output", help="override the report path")
    p_bench.add_argument("--threads", type=int, default=1,
                         help="worker processes for independent instances")
    p_bench.set_defaults(func=cmd_bench)

    p_validate = sub.add_parser("validate", help="self-check a configured model")
    p_validate.add_argument("config", help="YAML config with a model section")
    p_validate.add_argument("--output", help="optional JSON report path")
    p_validate.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
