"""YAML run configuration: parsing, validation, defaults, serialization.

A run config names a bundled model, the initial and target states, box
constraints (with "-inf"/"+inf" sentinels), control parameters, and output
options.  General g/h constraint maps are available to code-level users
only; a config file can express box constraints.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import yaml

from .constraints import ConstraintSet, DEFAULT_FEAS_TOL
from .controller import ControlParams
from .dynamics import DynamicalSystem, build_system, load_edge_list
from .errors import ParseError, ValidationError

# Defaults follow the documented example invocation (eps0=1e-3, eps1=1e-2,
# t_max=10) plus conservative windows for dissipative systems.
CONTROL_DEFAULTS = {
    "eps0": 1e-3,
    "eps1": 1e-2,
    "it_max": 1000,
    "t_max": 10.0,
    "dt": 0.01,
    "t_test": 100.0,
    "tol": 1e-2,
    "n_test": 1,
    "metric": "euclidean",
}

_MODEL_PARAM_ORDER = {
    "double_well_particle": ("gamma",),
    "bistable_network": ("k", "n"),
}


@dataclass
class ModelConfig:
    name: str
    params: dict = field(default_factory=dict)
    topology: Optional[str] = None  # path to an edge-list file


@dataclass
class OutputConfig:
    report: str = "report.json"
    verbosity: str = "full"  # "lean": final state only; "full": rich report
    trajectory: Optional[str] = None  # optional CSV dump path


@dataclass
class RunConfig:
    model: ModelConfig
    y0: list
    yt: list
    lb: list  # floats; -inf/+inf already resolved
    ub: list
    control: dict  # ControlParams fields
    output: OutputConfig
    feas_tol: float = DEFAULT_FEAS_TOL

    def build_system(self) -> DynamicalSystem:
        order = _MODEL_PARAM_ORDER[self.model.name]
        params = tuple(self.model.params[key] for key in order)
        topology = None
        if self.model.topology is not None:
            topology = load_edge_list(self.model.topology)
        return build_system(self.model.name, params, topology)

    def constraint_set(self) -> ConstraintSet:
        return ConstraintSet(
            lb=np.asarray(self.lb, dtype=float),
            ub=np.asarray(self.ub, dtype=float),
            feas_tol=self.feas_tol,
        )

    def control_params(self) -> ControlParams:
        return ControlParams(**self.control)


def _bound_value(raw, kind: str):
    if isinstance(raw, str):
        token = raw.strip().lower()
        if token in ("-inf", "-infinity"):
            return -math.inf
        if token in ("+inf", "inf", "+infinity", "infinity"):
            return math.inf
        raise ValidationError(f"bad bound entry {raw!r}; use a number, '-inf' or '+inf'")
    value = float(raw)
    if math.isnan(value):
        raise ValidationError(f"bound entry is NaN ({kind})")
    return value


def _require(doc: dict, key: str):
    if key not in doc:
        raise ValidationError(f"config is missing required key {key!r}")
    return doc[key]


def _vector(raw, name: str) -> list:
    try:
        vec = [float(v) for v in raw]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} must be a list of numbers") from exc
    if not vec or not all(math.isfinite(v) for v in vec):
        raise ValidationError(f"{name} must be a nonempty finite vector")
    return vec


def parse_config(path) -> RunConfig:
    """Load, validate, and default-fill a run config.

    Raises ParseError for malformed YAML (with line information) and
    ValidationError for bad values: dimension mismatches, eps1 <= eps0,
    lb > ub, unknown models, missing topology files.
    """
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ParseError(f"{path}: malformed YAML{where}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    return validate_config(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def validate_config(doc: dict, base_dir: str = ".") -> RunConfig:
    """Turn a raw config mapping into a validated RunConfig."""
    model_doc = _require(doc, "model")
    if not isinstance(model_doc, dict) or "name" not in model_doc:
        raise ValidationError("model must be a mapping with a 'name'")
    name = model_doc["name"]
    if name not in _MODEL_PARAM_ORDER:
        raise ValidationError(
            f"unknown model {name!r}; available: {sorted(_MODEL_PARAM_ORDER)}"
        )
    params = dict(model_doc.get("params", {}))
    missing = [k for k in _MODEL_PARAM_ORDER[name] if k not in params]
    if name == "double_well_particle":
        params.setdefault("gamma", 1.0)
        missing = []
    if missing:
        raise ValidationError(f"model {name!r} needs params {missing}")
    topology = model_doc.get("topology")
    if topology is not None:
        topology = os.path.normpath(os.path.join(base_dir, topology))
        if not os.path.exists(topology):
            raise ValidationError(f"topology file not found: {topology}")
    model = ModelConfig(name=name, params=params, topology=topology)

    y0 = _vector(_require(doc, "y0"), "y0")
    yt = _vector(_require(doc, "yt"), "yt")
    n = len(y0)
    if len(yt) != n:
        raise ValidationError(f"y0 has length {n} but yt has length {len(yt)}")
    if name == "double_well_particle" and n != 2:
        raise ValidationError("double_well_particle is 2-dimensional")
    if name == "bistable_network" and n != int(params["n"]):
        raise ValidationError(
            f"bistable_network has n={params['n']} but y0 has length {n}"
        )

    cons_doc = doc.get("constraints", {}) or {}
    lb_raw = cons_doc.get("lb", ["-inf"] * n)
    ub_raw = cons_doc.get("ub", ["+inf"] * n)
    if len(lb_raw) != n or len(ub_raw) != n:
        raise ValidationError("constraints lb/ub must match the state dimension")
    lb = [_bound_value(v, "lb") for v in lb_raw]
    ub = [_bound_value(v, "ub") for v in ub_raw]
    for i, (lo, hi) in enumerate(zip(lb, ub)):
        if lo > hi:
            raise ValidationError(f"lb[{i}]={lo} exceeds ub[{i}]={hi}")

    control = dict(CONTROL_DEFAULTS)
    extra = doc.get("control", {}) or {}
    unknown = set(extra) - set(CONTROL_DEFAULTS) - {"metric_weights"}
    if unknown:
        raise ValidationError(f"unknown control parameters: {sorted(unknown)}")
    control.update(extra)
    try:
        # YAML 1.1 reads bare scientific notation (1e-3) as a string;
        # coerce the numeric fields explicitly.
        for key in ("eps0", "eps1", "t_max", "dt", "t_test", "tol"):
            control[key] = float(control[key])
        for key in ("it_max", "n_test"):
            control[key] = int(control[key])
        ControlParams(**control)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    out_doc = doc.get("output", {}) or {}
    verbosity = out_doc.get("verbosity", "full")
    if verbosity not in ("lean", "full"):
        raise ValidationError(f"verbosity must be 'lean' or 'full', got {verbosity!r}")
    output = OutputConfig(
        report=out_doc.get("report", "report.json"),
        verbosity=verbosity,
        trajectory=out_doc.get("trajectory"),
    )
    return RunConfig(
        model=model, y0=y0, yt=yt, lb=lb, ub=ub,
        control=control, output=output,
        feas_tol=float(doc.get("feas_tol", DEFAULT_FEAS_TOL)),
    )


def serialize_config(config: RunConfig) -> str:
    """YAML text that parse_config maps back to an equivalent RunConfig."""

    def bound_repr(v):
        if v == -math.inf:
            return "-inf"
        if v == math.inf:
            return "+inf"
        return v

    doc = {
        "model": {k: v for k, v in asdict(config.model).items() if v is not None},
        "y0": list(config.y0),
        "yt": list(config.yt),
        "constraints": {
            "lb": [bound_repr(v) for v in config.lb],
            "ub": [bound_repr(v) for v in config.ub],
        },
        "control": dict(config.control),
        "output": {k: v for k, v in asdict(config.output).items() if v is not None},
        "feas_tol": config.feas_tol,
    }
    return yaml.safe_dump(doc, sort_keys=False)
