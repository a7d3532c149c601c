"""JSON run configuration: schema, a small expression language for fields,
and conversion into a :class:`~deepquench.problem.Problem` bundle.

Fields (initial data, targets, control, bounds) may be given as a number, a
list of nodal values, or an expression string over ``x``, ``y`` (and ``t`` for
space-time fields) built from numbers, ``+ - * / **``, ``sin``, ``cos``,
``exp``, ``tanh`` and the constants ``pi`` and ``e``.
"""

import ast
import json
import math
import re
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .errors import ConfigError
from .geometry import GridSpec, TimeGrid
from .objective import ControlField, ObjectiveSpec
from .optimizer import OptimizerOptions
from .potentials import CustomF2, PotentialSpec
from .problem import Problem
from .quench import DEFAULT_GAMMAS, QuenchSchedule
from .state import InitialData, ModelParams, SolverOptions

_FIELD = {"oneOf": [{"type": "number"}, {"type": "string"},
                    {"type": "array", "items": {"type": "number"}},
                    {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}]}
_BOUND = {"oneOf": [_FIELD, {"type": "null"}]}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "deepquench run configuration",
    "type": "object",
    "required": ["grid", "time", "model", "potential", "initial"],
    "additionalProperties": False,
    "properties": {
        "description": {"type": "string"},
        "grid": {
            "type": "object", "additionalProperties": False,
            "required": ["extents", "nodes"],
            "properties": {
                "extents": {"type": "array", "items": _POS, "minItems": 1, "maxItems": 2},
                "nodes": {"type": "array", "items": {"type": "integer", "minimum": 3},
                          "minItems": 1, "maxItems": 2},
            },
        },
        "time": {
            "type": "object", "additionalProperties": False,
            "required": ["horizon", "steps"],
            "properties": {"horizon": _POS, "steps": {"type": "integer", "minimum": 1}},
        },
        "model": {
            "type": "object", "additionalProperties": False,
            "required": ["alpha", "beta", "theta_c"],
            "properties": {"alpha": {"type": "number"}, "beta": {"type": "number"},
                           "theta_c": {"type": "number"}},
        },
        "potential": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["logarithmic", "obstacle"]},
                "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "k": _NONNEG,
                "f2": {
                    "type": "object", "additionalProperties": False,
                    "required": ["value", "first", "second", "lipschitz"],
                    "properties": {"value": {"type": "string"}, "first": {"type": "string"},
                                   "second": {"type": "string"}, "lipschitz": _NONNEG},
                },
            },
        },
        "initial": {
            "type": "object", "additionalProperties": False,
            "required": ["phi0"],
            "properties": {"phi0": _FIELD, "w0": _FIELD, "v0": _FIELD},
        },
        "control": {
            "type": "object", "additionalProperties": False,
            "properties": {"value": _FIELD, "lower": _BOUND, "upper": _BOUND},
        },
        "objective": {
            "type": "object", "additionalProperties": False,
            "properties": dict(
                {k: {"type": "number"} for k in ("k1", "k2", "k3", "k4", "k5", "k6", "ell")},
                targets={
                    "type": "object", "additionalProperties": False,
                    "properties": {k: _FIELD for k in ("phi_Q", "w_Q", "wp_Q", "phi_Omega",
                                                        "w_Omega", "wp_Omega")},
                }),
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {"newton_tol": _POS, "max_iter": {"type": "integer", "minimum": 1},
                           "max_halvings": {"type": "integer", "minimum": 1},
                           "interior_margin": _POS, "pdas_c": _POS, "pdas_tol": _POS,
                           "max_pdas_iter": {"type": "integer", "minimum": 1},
                           "linear_rtol": _POS},
        },
        "optimizer": {
            "type": "object", "additionalProperties": False,
            "properties": {"s0": _POS, "armijo_c": _POS, "shrink": _POS, "tol": _POS,
                           "max_iter": {"type": "integer", "minimum": 1}, "min_step": _POS},
        },
        "schedule": {
            "type": "object", "additionalProperties": False,
            "properties": {"gammas": {"type": "array", "items": _POS, "minItems": 1},
                           "warm_start": {"type": "boolean"},
                           "pairs": {"type": "array", "items": {"type": "array", "items": _POS,
                                                                "minItems": 2, "maxItems": 2}},
                           "rel_tol": _POS},
        },
        "gradient_check": {
            "type": "object", "additionalProperties": False,
            "properties": {"pairs": {"type": "integer", "minimum": 1},
                           "seed": {"type": "integer", "minimum": 0},
                           "hs": {"type": "array", "items": _POS, "minItems": 2},
                           "min_order": _POS},
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"every": {"type": "integer", "minimum": 1}},
        },
    },
}

# ---------------------------------------------------------------- expressions

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


def evaluate_expression(text, variables):
    """Evaluate a whitelisted arithmetic expression with numpy semantics."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and type(node.value) in (int, float):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = ev(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Name):
            if node.id in variables:
                return variables[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ConfigError(f"unknown name {node.id!r} in expression {text!r}")
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ConfigError(f"unsupported construct {type(node).__name__} in expression {text!r}")

    with np.errstate(all="ignore"):
        return ev(tree)


def _evaluate_named(text, variables, name):
    try:
        return evaluate_expression(text, variables)
    except ConfigError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _spatial_vars(grid):
    coords = grid.coordinates()
    names = ("x", "y")[: grid.dimension]
    return dict(zip(names, coords))


def build_field(spec, grid, name):
    """Nodal values of a spatial field given as number, list or expression."""
    if isinstance(spec, str):
        val = _evaluate_named(spec, _spatial_vars(grid), name)
        arr = np.broadcast_to(np.asarray(val, dtype=float), (grid.n_nodes,)).copy()
    else:
        arr = np.asarray(spec, dtype=float)
        if arr.ndim == 0:
            arr = np.full(grid.n_nodes, float(arr))
    if arr.shape != (grid.n_nodes,):
        raise ConfigError(f"{name}: expected {grid.n_nodes} nodal values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: field has non-finite values")
    return arr


def build_series(spec, grid, tg, name, allow_inf=False):
    """Space-time field ``(N+1, n)``; expressions may also use ``t``."""
    shape = (tg.steps + 1, grid.n_nodes)
    if isinstance(spec, str):
        vars_ = {k: v[None, :] for k, v in _spatial_vars(grid).items()}
        vars_["t"] = tg.times[:, None]
        val = _evaluate_named(spec, vars_, name)
        arr = np.broadcast_to(np.asarray(val, dtype=float), shape).copy()
    else:
        arr = np.asarray(spec, dtype=float)
        if arr.ndim == 0:
            arr = np.full(shape, float(arr))
        elif arr.ndim == 1 and arr.shape == (grid.n_nodes,):
            arr = np.broadcast_to(arr, shape).copy()
    if arr.shape != shape:
        raise ConfigError(f"{name}: expected shape {shape}, got {arr.shape}")
    bad = np.isnan(arr) if allow_inf else ~np.isfinite(arr)
    if np.any(bad):
        raise ConfigError(f"{name}: field has non-finite values")
    return arr


def build_f2(spec):
    funcs = {}
    for part in ("value", "first", "second"):
        text = spec[part]
        evaluate_expression(text, {"r": np.zeros(1)})

        def fn(r, text=text):
            r = np.asarray(r, dtype=float)
            return np.broadcast_to(evaluate_expression(text, {"r": r}), r.shape).astype(float)
        funcs[part] = fn
    return CustomF2(funcs["value"], funcs["first"], funcs["second"], float(spec["lipschitz"]))

# ---------------------------------------------------------------- loading


def _line_of(text, path):
    """Best-effort 1-based line of the deepest key in ``path`` present in the
    source text (0 when no key can be located)."""
    pos, line = 0, 0
    for key in path:
        if not isinstance(key, str):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos = m.start()
        line = text.count("\n", 0, pos) + 1
    return line


def _where(text, path, source):
    dotted = ".".join(str(p) for p in path) or "<root>"
    line = _line_of(text, path)
    return f"{source}:{line}: {dotted}" if line else f"{source}: {dotted}"


@dataclass
class RunConfig:
    """Everything a CLI subcommand needs, plus the resolved raw config."""

    problem: Problem
    control: ControlField
    optimizer: OptimizerOptions
    schedule: QuenchSchedule
    pairs: list
    rel_tol: float
    gradient_check: dict
    every: int
    raw: dict
    phi0_range: tuple
    source: str = "<config>"
    extras: dict = field(default_factory=dict)


def parse_config_text(text, source="<config>"):
    """Decode JSON, reporting syntax errors as ``source:line:col``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if isinstance(data, dict) and "config" in data and "grid" not in data:
        data = data["config"]
    return data


def validate_schema(data, text="", source="<config>"):
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if not errors:
        return
    err = errors[0]
    path = list(err.absolute_path)
    if err.validator == "required":
        missing = re.findall(r"'([^']+)' is a required property", err.message)
        if missing:
            path = path + [missing[0]]
            raise ConfigError(f"{_where(text, path, source)}: missing required field "
                              f"{missing[0]!r}")
    raise ConfigError(f"{_where(text, path, source)}: {err.message}")


def build_run_config(data, text="", source="<config>"):
    """Turn a decoded config dict into a :class:`RunConfig`."""
    try:
        return _build(data, text, source)
    except ConfigError as exc:
        msg = str(exc)
        if msg.startswith(source):
            raise
        head = msg.split(":", 1)[0]
        if re.fullmatch(r"[A-Za-z_0-9.]+", head):
            line = _line_of(text, head.split("."))
            loc = f"{source}:{line}" if line else source
            raise ConfigError(f"{loc}: {msg}") from None
        raise ConfigError(f"{source}: {msg}") from None


def _build(data, text, source):
    validate_schema(data, text, source)

    def fail(path, msg):
        raise ConfigError(f"{_where(text, path, source)}: {msg}")

    g = data["grid"]
    if len(g["extents"]) != len(g["nodes"]):
        fail(["grid", "nodes"], "extents and nodes must have the same length")
    if len(g["extents"]) == 1:
        grid = GridSpec.interval(g["extents"][0], g["nodes"][0])
    else:
        grid = GridSpec.rectangle(g["extents"][0], g["extents"][1], g["nodes"][0], g["nodes"][1])
    tg = TimeGrid(data["time"]["horizon"], data["time"]["steps"])

    m = data["model"]
    for key in ("alpha", "beta", "theta_c"):
        if not m[key] > 0:
            fail(["model", key], f"(A1) {key} must be strictly positive, got {m[key]}")
    params = ModelParams(m["alpha"], m["beta"], m["theta_c"])

    p = data["potential"]
    custom = build_f2(p["f2"]) if "f2" in p else None
    potential = PotentialSpec(p.get("kind", "logarithmic"), p.get("gamma", 1.0), p.get("k", 0.0),
                              custom)

    ini = data["initial"]
    phi0 = build_field(ini["phi0"], grid, "initial.phi0")
    w0 = build_field(ini.get("w0", 0.0), grid, "initial.w0")
    v0 = build_field(ini.get("v0", 0.0), grid, "initial.v0")
    lo, hi = float(phi0.min()), float(phi0.max())
    if lo <= -1.0 or hi >= 1.0:
        fail(["initial", "phi0"], f"(A3) need -1 < r_lo <= phi0 <= r_hi < 1; "
                                  f"observed r_lo = {lo!r}, r_hi = {hi!r}")
    init = InitialData(phi0, w0, v0)

    obj = data.get("objective", {})
    targets = obj.get("targets", {})
    weights = {k: float(obj.get(k, 0.0)) for k in ("k1", "k2", "k3", "k4", "k5", "k6", "ell")}
    for k, val in weights.items():
        if val < 0:
            fail(["objective", k], f"(A4) cost weight {k} must be nonnegative, got {val}")
    if not any(weights.values()):
        fail(["objective"], "(A4) cost weights k1..k6, ell must not all vanish")
    if weights["k6"] > 0 and "wp_Omega" not in targets:
        fail(["objective", "k6"], "(A7) k6 > 0 requires the terminal target wp_Omega")
    tfields = {}
    for name in ("phi_Q", "w_Q", "wp_Q"):
        if name in targets:
            tfields[name] = build_series(targets[name], grid, tg, f"objective.targets.{name}")
    for name in ("phi_Omega", "w_Omega", "wp_Omega"):
        if name in targets:
            tfields[name] = build_field(targets[name], grid, f"objective.targets.{name}")
    objective = ObjectiveSpec(**weights, **tfields)

    c = data.get("control", {})
    lower = c.get("lower")
    upper = c.get("upper")
    lower = -np.inf if lower is None else build_series(lower, grid, tg, "control.lower")
    upper = np.inf if upper is None else build_series(upper, grid, tg, "control.upper")
    if np.any(np.asarray(lower) > np.asarray(upper)):
        fail(["control"], "(A6) control bounds need lower <= upper everywhere")
    uvals = build_series(c.get("value", 0.0), grid, tg, "control.value")
    control = ControlField(uvals, lower, upper)
    if not control.is_admissible():
        fail(["control", "value"], "(A6) control value lies outside [lower, upper]")

    solver = SolverOptions(**data.get("solver", {}))
    problem = Problem(grid, tg, params, potential, init, objective, lower, upper, solver)

    sched = data.get("schedule", {})
    try:
        schedule = QuenchSchedule(tuple(sched.get("gammas", DEFAULT_GAMMAS)),
                                  sched.get("warm_start", False))
    except ValueError as exc:
        fail(["schedule", "gammas"], str(exc))
    gammas = schedule.gammas
    # consecutive pairs, largest three, smallest pair first
    default_pairs = [(b, a) for a, b in zip(gammas, gammas[1:])][:3][::-1]
    pairs = [tuple(sorted(pr)) for pr in sched.get("pairs", default_pairs)]

    gc = {"pairs": 5, "seed": 0, "hs": [1e-2, 1e-3, 1e-4, 1e-5], "min_order": 1.9}
    gc.update(data.get("gradient_check", {}))

    return RunConfig(problem=problem, control=control,
                     optimizer=OptimizerOptions(**data.get("optimizer", {})),
                     schedule=schedule, pairs=pairs, rel_tol=float(sched.get("rel_tol", 0.01)),
                     gradient_check=gc, every=int(data.get("output", {}).get("every", 1)),
                     raw=data, phi0_range=(lo, hi), source=source)


def load_config(path):
    """Read, validate and build a run configuration from a JSON file.

    A run manifest (any JSON object with a ``config`` member) is accepted too,
    which is how an output directory is re-run.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    data = parse_config_text(text, str(path))
    try:
        return build_run_config(data, text, str(path))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def write_config(path, run):
    """Write the resolved raw config so that :func:`load_config` rebuilds it."""
    with open(path, "w") as fh:
        json.dump(run.raw, fh, indent=2, sort_keys=True)
        fh.write("\n")


def schema_document():
    return json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True) + "\n"
