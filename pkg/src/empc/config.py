"""Study configuration: strict JSON schema, normalization, object building.

A configuration document has six sections (model, cost, synthesis, ocp,
simulation, output).  Validation is strict: unknown keys are rejected with
their path, every field is type-checked, and the normalized form (defaults
materialized, canonical key order) is idempotent under another pass.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources

import numpy as np

from . import expr
from .costs import StageCost
from .dynamics import Equilibrium, PlantModel
from .exceptions import ConfigError
from .presets import make_preset, available_models
from .terminal import DEFAULT_MU_SCHEDULE


def _fail(path, message):
    raise ConfigError(f"{path}: {message}")


def _expect_mapping(value, path):
    if not isinstance(value, dict):
        _fail(path, f"expected an object, got {type(value).__name__}")
    return value


def _check_keys(section, path, allowed):
    unknown = set(section) - set(allowed)
    if unknown:
        _fail(path, f"unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}")


def _number(value, path, positive=False, nonnegative=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    value = float(value)
    if positive and not value > 0:
        _fail(path, "must be positive")
    if nonnegative and value < 0:
        _fail(path, "must be nonnegative")
    return value


def _integer(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}")
    return value


def _vector(value, path, length=None):
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        _fail(path, "expected a list of numbers")
    if length is not None and len(value) != length:
        _fail(path, f"expected length {length}, got {len(value)}")
    return [float(v) for v in value]


def _matrix(value, path, rows=None, cols=None):
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        _fail(path, "expected a list of rows")
    width = len(value[0])
    out = []
    for i, row in enumerate(value):
        if len(row) != width:
            _fail(path, "rows have inconsistent lengths")
        out.append(_vector(row, f"{path}[{i}]"))
    if rows is not None and len(out) != rows:
        _fail(path, f"expected {rows} rows, got {len(out)}")
    if cols is not None and width != cols:
        _fail(path, f"expected {cols} columns, got {width}")
    return out


def _box(value, path, dim=None):
    mat = _matrix(value, path, rows=dim, cols=2)
    for i, (lo, hi) in enumerate(mat):
        if lo > hi:
            _fail(f"{path}[{i}]", "lower bound exceeds upper bound")
    return mat


def _expression(value, path, n, m, q=0, allow_w=False):
    if not isinstance(value, str):
        _fail(path, f"expected an expression string, got {value!r}")
    try:
        node = expr.parse(value)
    except Exception as err:
        _fail(path, f"cannot parse expression: {err}")
    allowed = {f"x{i + 1}" for i in range(n)} | {f"u{j + 1}" for j in range(m)}
    if allow_w:
        allowed |= {f"w{j + 1}" for j in range(q)}
    extra = expr.variables(node) - allowed
    if extra:
        _fail(path, f"unknown variables {sorted(extra)}")
    return value


_SECTIONS = ("model", "cost", "synthesis", "ocp", "simulation", "output")


def normalize(document):
    """Validate a raw configuration dict and return its canonical form."""
    document = _expect_mapping(document, "config")
    _check_keys(document, "config", _SECTIONS)

    model_in = _expect_mapping(document.get("model", {}), "model")
    if "preset" in model_in:
        _check_keys(model_in, "model", ("preset", "substeps"))
        preset = model_in["preset"]
        if preset not in available_models():
            _fail("model.preset", f"unknown preset {preset!r}; available: {available_models()}")
        model_out = {
            "preset": preset,
            "substeps": _integer(model_in.get("substeps", 4), "model.substeps", minimum=1),
        }
        probe, _ = make_preset(preset)
        n, m, q = probe.n, probe.m, probe.q
    else:
        _check_keys(model_in, "model", (
            "rhs", "state_box", "input_box", "disturbance_box",
            "sample_time", "substeps", "equilibrium",
        ))
        for key in ("rhs", "state_box", "input_box", "disturbance_box", "sample_time",
                    "equilibrium"):
            if key not in model_in:
                _fail(f"model.{key}", "required for a custom model")
        rhs = model_in["rhs"]
        if not isinstance(rhs, list) or not rhs:
            _fail("model.rhs", "expected a nonempty list of expressions")
        n = len(rhs)
        state_box = _box(model_in["state_box"], "model.state_box", dim=n)
        input_box = _box(model_in["input_box"], "model.input_box")
        m = len(input_box)
        disturbance_box = _box(model_in["disturbance_box"], "model.disturbance_box")
        q = len(disturbance_box)
        rhs = [
            _expression(text, f"model.rhs[{i}]", n, m, q, allow_w=True)
            for i, text in enumerate(rhs)
        ]
        eq_in = _expect_mapping(model_in["equilibrium"], "model.equilibrium")
        _check_keys(eq_in, "model.equilibrium", ("x", "u", "residual_tol"))
        model_out = {
            "rhs": rhs,
            "state_box": state_box,
            "input_box": input_box,
            "disturbance_box": disturbance_box,
            "sample_time": _number(model_in["sample_time"], "model.sample_time", positive=True),
            "substeps": _integer(model_in.get("substeps", 4), "model.substeps", minimum=1),
            "equilibrium": {
                "x": _vector(eq_in.get("x"), "model.equilibrium.x", length=n),
                "u": _vector(eq_in.get("u"), "model.equilibrium.u", length=m),
                "residual_tol": _number(
                    eq_in.get("residual_tol", 1e-9), "model.equilibrium.residual_tol",
                    nonnegative=True,
                ),
            },
        }

    cost_in = _expect_mapping(document.get("cost", {}), "cost")
    _check_keys(cost_in, "cost", ("econ", "g", "lambda", "regularization"))
    if "econ" not in cost_in:
        _fail("cost.econ", "required")
    cost_out = {
        "econ": _expression(cost_in["econ"], "cost.econ", n, m),
        "g": None if cost_in.get("g") is None else _expression(cost_in["g"], "cost.g", n, m),
        "lambda": _number(cost_in.get("lambda", 1e3), "cost.lambda", positive=True),
        "regularization": (
            None if cost_in.get("regularization") is None
            else _expression(cost_in["regularization"], "cost.regularization", n, m)
        ),
    }

    synth_in = _expect_mapping(document.get("synthesis", {}), "synthesis")
    _check_keys(synth_in, "synthesis", (
        "K", "lqr", "Q_tilde", "tau_mode", "mu_schedule", "grid_density", "seed",
    ))
    K = synth_in.get("K")
    if K is not None:
        K = _matrix(K, "synthesis.K", rows=m, cols=n)
    lqr_in = _expect_mapping(synth_in.get("lqr", {}), "synthesis.lqr")
    _check_keys(lqr_in, "synthesis.lqr", ("Q", "R"))
    lqr_out = {
        "Q": _matrix(lqr_in["Q"], "synthesis.lqr.Q", rows=n, cols=n) if "Q" in lqr_in
        else np.eye(n).tolist(),
        "R": _matrix(lqr_in["R"], "synthesis.lqr.R", rows=m, cols=m) if "R" in lqr_in
        else np.eye(m).tolist(),
    }
    q_tilde = synth_in.get("Q_tilde", "identity")
    if q_tilde != "identity":
        q_tilde = _matrix(q_tilde, "synthesis.Q_tilde", rows=n, cols=n)
    tau_mode = synth_in.get("tau_mode", "cover")
    if tau_mode not in ("cover", "fit"):
        _fail("synthesis.tau_mode", f"expected 'cover' or 'fit', got {tau_mode!r}")
    schedule = synth_in.get("mu_schedule", list(DEFAULT_MU_SCHEDULE))
    schedule = _vector(schedule, "synthesis.mu_schedule")
    if any(v < 0 for v in schedule):
        _fail("synthesis.mu_schedule", "weights must be nonnegative")
    synth_out = {
        "K": K,
        "lqr": lqr_out,
        "Q_tilde": q_tilde,
        "tau_mode": tau_mode,
        "mu_schedule": schedule,
        "grid_density": _integer(synth_in.get("grid_density", 10_000),
                                 "synthesis.grid_density", minimum=1),
        "seed": _integer(synth_in.get("seed", 0), "synthesis.seed"),
    }

    ocp_in = _expect_mapping(document.get("ocp", {}), "ocp")
    _check_keys(ocp_in, "ocp", ("horizon", "kkt_tol", "constraint_tol", "max_iterations"))
    ocp_out = {
        "horizon": _integer(ocp_in.get("horizon", 16), "ocp.horizon", minimum=1),
        "kkt_tol": _number(ocp_in.get("kkt_tol", 1e-6), "ocp.kkt_tol", positive=True),
        "constraint_tol": _number(ocp_in.get("constraint_tol", 1e-8),
                                  "ocp.constraint_tol", positive=True),
        "max_iterations": _integer(ocp_in.get("max_iterations", 200),
                                   "ocp.max_iterations", minimum=1),
    }

    sim_in = _expect_mapping(document.get("simulation", {}), "simulation")
    _check_keys(sim_in, "simulation", (
        "x0", "steps", "n_runs", "seed", "amplitude_scale",
    ))
    sim_out = {
        "x0": _vector(sim_in.get("x0", [0.0] * n), "simulation.x0", length=n),
        "steps": _integer(sim_in.get("steps", 100), "simulation.steps", minimum=0),
        "n_runs": _integer(sim_in.get("n_runs", 30), "simulation.n_runs", minimum=1),
        "seed": _integer(sim_in.get("seed", 1), "simulation.seed"),
        "amplitude_scale": _number(sim_in.get("amplitude_scale", 1.0),
                                   "simulation.amplitude_scale", nonnegative=True),
    }

    out_in = _expect_mapping(document.get("output", {}), "output")
    _check_keys(out_in, "output", ("directory", "formats"))
    formats = out_in.get("formats", ["csv"])
    if not isinstance(formats, list) or any(f != "csv" for f in formats):
        _fail("output.formats", "only ['csv'] is supported")
    directory = out_in.get("directory")
    if directory is not None and not isinstance(directory, str):
        _fail("output.directory", "expected a string or null")
    out_out = {"directory": directory, "formats": formats}

    return {
        "model": model_out,
        "cost": cost_out,
        "synthesis": synth_out,
        "ocp": ocp_out,
        "simulation": sim_out,
        "output": out_out,
    }


def serialize(config):
    """Canonical JSON text of a normalized configuration."""
    return json.dumps(config, indent=2, sort_keys=True) + "\n"


def config_sha256(config):
    return hashlib.sha256(serialize(config).encode("utf-8")).hexdigest()


def parse_text(text):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON at line {err.lineno}, column {err.colno}") from err
    return normalize(raw)


def load_config(path):
    """Read a configuration file; bare names fall back to bundled configs."""
    text = None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        candidate = resources.files("empc").joinpath("configs", str(path))
        if candidate.is_file():
            text = candidate.read_text(encoding="utf-8")
    if text is None:
        raise ConfigError(f"configuration file not found: {path}")
    return parse_text(text)


# ---------------------------------------------------------------------------
# object construction


class _ExprField:
    """Vector field compiled from rhs expression strings (picklable)."""

    def __init__(self, rhs_exprs, n, m, q):
        self.rhs_exprs = list(rhs_exprs)
        self.dims = (n, m, q)
        self._build()

    def _build(self):
        n, m, q = self.dims
        names = ([f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
                 + [f"w{j + 1}" for j in range(q)])
        nodes = [expr.parse(text) for text in self.rhs_exprs]
        self._fns = [expr.compile_fn(node, names) for node in nodes]
        self._jx = [[expr.compile_fn(expr.diff(node, f"x{i + 1}"), names) for i in range(n)]
                    for node in nodes]
        self._ju = [[expr.compile_fn(expr.diff(node, f"u{j + 1}"), names) for j in range(m)]
                    for node in nodes]

    def __getstate__(self):
        return {"rhs_exprs": self.rhs_exprs, "dims": self.dims}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._build()

    def _args(self, x, u, w):
        n, m, q = self.dims
        return ([x[..., i] for i in range(n)] + [u[..., j] for j in range(m)]
                + [w[..., j] for j in range(q)])

    def rhs(self, x, u, w):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        args = self._args(x, u, w)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1], w.shape[:-1])
        cols = [np.broadcast_to(np.asarray(fn(*args), dtype=float), shape) for fn in self._fns]
        return np.stack(cols, axis=-1)

    def jac(self, x, u, w):
        n, m, _ = self.dims
        args = self._args(np.asarray(x, float), np.asarray(u, float), np.asarray(w, float))
        A = np.array([[fn(*args) for fn in row] for row in self._jx], dtype=float)
        B = np.array([[fn(*args) for fn in row] for row in self._ju], dtype=float)
        return A.reshape(n, n), B.reshape(n, m)


def build_model(config):
    """Instantiate (PlantModel, Equilibrium) from a normalized configuration."""
    section = config["model"]
    if "preset" in section:
        model, eq = make_preset(section["preset"], substeps=section["substeps"])
        return model, eq
    n = len(section["rhs"])
    m = len(section["input_box"])
    q = len(section["disturbance_box"])
    fieldobj = _ExprField(section["rhs"], n, m, q)
    model = PlantModel(
        n=n, m=m, q=q,
        rhs=fieldobj.rhs,
        state_box=section["state_box"],
        input_box=section["input_box"],
        disturbance_box=section["disturbance_box"],
        sample_time=section["sample_time"],
        substeps=section["substeps"],
        rhs_jac=fieldobj.jac,
        name="custom",
    )
    eq_cfg = section["equilibrium"]
    eq = Equilibrium(x=eq_cfg["x"], u=eq_cfg["u"], residual_tol=eq_cfg["residual_tol"])
    eq.validate(model)
    return model, eq


def build_cost(config, model):
    section = config["cost"]
    return StageCost.from_expressions(
        model.n, model.m,
        econ=section["econ"],
        reg=section["regularization"],
        g=section["g"],
        penalty=section["lambda"],
    )
