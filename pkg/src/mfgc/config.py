"""Run configuration: TOML parsing, validation and object construction.

Unknown keys are rejected with their dotted path, and every value is checked
before any computation starts.
"""
from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .coupler import SolverConfig
from .errors import ConfigError
from .grid import TimeGrid, TorusGrid
from .models import MODEL_KINDS, Model, StructuralConstants
from .pde import SchemeConfig
from .profiles import Kernel, Profile

MODEL_PARAMS = {
    "linear_demand": {"eps": 1.0},
    "neg_corr": {"coupling": 0.8, "local_weight": 0.0},
    "price_impact": {"eps_tilde": 0.3},
    "crowd_motion": {"theta": 0.5, "lambda_tilde": 0.5, "a": 2.0, "b": 2.0, "q0": 2.0},
    "flocking": {},
}
KERNEL_MODELS = {"crowd_motion", "flocking"}
RUNNING_MODELS = {"neg_corr", "price_impact", "crowd_motion", "flocking"}
PROFILE_KEYS = {"const", "amp", "mode", "shift"}
KERNEL_KEYS = {"kind", "kappa", "scale"}
CONSTANT_KEYS = {"q", "q0", "lambda0", "C0", "lambda1", "lambda2", "C_growth"}

DEFAULTS = {
    "seed": 0,
    "grid": {"n": 128, "T": 1.0, "nt": 256},
    "initial": {"const": 1.0, "amp": 0.0, "mode": 1, "shift": 0.0},
    "solver": {"M": "inf", "omega": 0.5, "tol_outer": 1e-8, "max_outer": 200, "tol_mu": 1e-12,
               "max_mu": 200, "continuation": None, "initial_guess": "zero",
               "scheme": {"nu": 0.1, "advection": "centered", "cfl_guard": True}},
    "output": {"dir": "out", "figures": True},
    "check": {"n_samples": 10_000, "p_max": 10.0, "amp_max": 10.0, "h4": False,
              "h4_tuples": 100_000, "constants": {}},
}


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _reject_unknown(table: dict, allowed, path: str):
    for key in table:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"{where}: unknown key")


def _merge(defaults: dict, given: dict, path: str) -> dict:
    _reject_unknown(given, defaults.keys(), path)
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        sub = f"{path}.{k}" if path else k
        if isinstance(defaults[k], dict) and k != "constants":
            if not isinstance(v, dict):
                _fail(sub, "expected a table")
            out[k] = _merge(defaults[k], v, sub)
        else:
            out[k] = v
    return out


def _number(v, path, *, positive=False, nonneg=False, allow_inf=False, integer=False):
    if allow_inf and isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {v!r}")
    if integer:
        if int(v) != v:
            _fail(path, f"expected an integer, got {v!r}")
        v = int(v)
    if not allow_inf and not math.isfinite(v):
        _fail(path, "must be finite")
    if positive and not v > 0:
        _fail(path, f"must be positive, got {v!r}")
    if nonneg and v < 0:
        _fail(path, f"must be nonnegative, got {v!r}")
    return v


def _profile(table: dict, path: str, extra=()) -> Profile:
    _reject_unknown(table, PROFILE_KEYS | set(extra), path)
    kw = {k: _number(table[k], f"{path}.{k}", integer=(k == "mode")) for k in PROFILE_KEYS & table.keys()}
    return Profile(**kw)


def _kernel(table: dict, path: str) -> Kernel:
    _reject_unknown(table, KERNEL_KEYS, path)
    kw = dict(table)
    for k in ("kappa", "scale"):
        if k in kw:
            kw[k] = _number(kw[k], f"{path}.{k}")
    try:
        return Kernel(**kw)
    except ValueError as exc:
        _fail(path, str(exc))


@dataclass
class RunConfig:
    raw: dict
    model_table: dict
    seed: int
    grid: TorusGrid
    tgrid: TimeGrid
    m0_profile: Profile
    solver: SolverConfig
    initial_guess: str
    output_dir: Path
    figures: bool
    check: dict
    source: Optional[Path] = None

    def build_model(self, grid: Optional[TorusGrid] = None) -> Model:
        return build_model(self.model_table, grid or self.grid)

    @property
    def m0(self) -> np.ndarray:
        return self.m0_profile.density(self.grid.nodes)

    def constants_override(self, model: Model) -> Optional[StructuralConstants]:
        over = self.check.get("constants") or {}
        if not over:
            return None
        return replace(model.constants(), **over)

    def echo(self) -> dict:
        return copy.deepcopy(self.raw)


def build_model(table: dict, grid: TorusGrid) -> Model:
    table = dict(table)
    kind = table.pop("kind", None)
    if kind not in MODEL_KINDS:
        _fail("model.kind", f"must be one of {sorted(MODEL_KINDS)}, got {kind!r}")
    allowed = set(MODEL_PARAMS[kind]) | {"terminal"}
    if kind in KERNEL_MODELS:
        allowed.add("kernel")
    else:
        allowed.add("smoothing")
    if kind in RUNNING_MODELS:
        allowed.add("running")
    _reject_unknown(table, allowed, "model")
    kw = {}
    for k in MODEL_PARAMS[kind]:
        if k in table:
            kw[k] = _number(table[k], f"model.{k}", allow_inf=(k == "q0"))
    term = table.get("terminal", {})
    if not isinstance(term, dict):
        _fail("model.terminal", "expected a table")
    kw["terminal"] = _profile(term, "model.terminal", extra=("coupling",))
    if "coupling" in term:
        kw["terminal_coupling"] = _number(term["coupling"], "model.terminal.coupling")
    if "running" in table:
        kw["running"] = _profile(table["running"], "model.running")
    if "kernel" in table:
        kw["kernel"] = _kernel(table["kernel"], "model.kernel")
    if "smoothing" in table:
        kw["smoothing"] = _kernel(table["smoothing"], "model.smoothing")
    try:
        return MODEL_KINDS[kind](grid, **kw)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def parse_config(data: dict, source: Optional[Path] = None) -> RunConfig:
    data = copy.deepcopy(data)
    if "model" not in data or not isinstance(data["model"], dict):
        _fail("model", "missing [model] table")
    model_table = data.pop("model")
    cfg = _merge(DEFAULTS, data, "")
    seed = _number(cfg["seed"], "seed", integer=True, nonneg=True)
    g = cfg["grid"]
    n = _number(g["n"], "grid.n", integer=True, positive=True)
    nt = _number(g["nt"], "grid.nt", integer=True, positive=True)
    T = _number(g["T"], "grid.T", positive=True)
    if n < 4:
        _fail("grid.n", "must be at least 4")
    grid, tgrid = TorusGrid(n), TimeGrid(T, nt)
    m0 = _profile(cfg["initial"], "initial")
    if not m0.const - abs(m0.amp) > 0:
        _fail("initial", "initial density must be positive (const > |amp|)")
    s = cfg["solver"]
    sch = s["scheme"]
    try:
        scheme = SchemeConfig(nu=_number(sch["nu"], "solver.scheme.nu", positive=True),
                              advection=sch["advection"], cfl_guard=bool(sch["cfl_guard"]))
    except ValueError as exc:
        raise ConfigError(f"solver.scheme: {exc}") from exc
    omega = _number(s["omega"], "solver.omega")
    if not 0.0 < omega <= 1.0:
        _fail("solver.omega", f"must lie in (0, 1], got {omega!r}")
    cont = s["continuation"]
    if cont is not None:
        if not isinstance(cont, list) or not cont:
            _fail("solver.continuation", "must be a nonempty list of radii")
        cont = [_number(v, "solver.continuation", positive=True, allow_inf=True) for v in cont]
        if any(b <= a for a, b in zip(cont, cont[1:])):
            _fail("solver.continuation", "radii must increase")
    if s["initial_guess"] not in ("zero", "terminal"):
        _fail("solver.initial_guess", "must be 'zero' or 'terminal'")
    solver = SolverConfig(
        M=_number(s["M"], "solver.M", positive=True, allow_inf=True), omega=omega,
        tol_outer=_number(s["tol_outer"], "solver.tol_outer", positive=True),
        max_outer=_number(s["max_outer"], "solver.max_outer", integer=True, positive=True),
        tol_mu=_number(s["tol_mu"], "solver.tol_mu", positive=True),
        max_mu=_number(s["max_mu"], "solver.max_mu", integer=True, positive=True),
        scheme=scheme, continuation=cont)
    o = cfg["output"]
    if not isinstance(o["dir"], str):
        _fail("output.dir", "expected a string")
    c = cfg["check"]
    for k in ("n_samples", "h4_tuples"):
        c[k] = _number(c[k], f"check.{k}", integer=True, positive=True)
    for k in ("p_max", "amp_max"):
        c[k] = _number(c[k], f"check.{k}", positive=True)
    if not isinstance(c["constants"], dict):
        _fail("check.constants", "expected a table")
    _reject_unknown(c["constants"], CONSTANT_KEYS, "check.constants")
    for k, v in c["constants"].items():
        c["constants"][k] = _number(v, f"check.constants.{k}", allow_inf=(k == "q0"))
    rc = RunConfig(raw={**cfg, "model": model_table}, model_table=model_table, seed=seed,
                   grid=grid, tgrid=tgrid, m0_profile=m0, solver=solver,
                   initial_guess=s["initial_guess"], output_dir=Path(o["dir"]),
                   figures=bool(o["figures"]), check=c, source=source)
    rc.build_model()  # validate the model block up front
    return rc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, source=path)


def set_dotted(data: dict, key: str, value: Any) -> dict:
    """Copy of ``data`` with the dotted ``key`` set to ``value``."""
    out = copy.deepcopy(data)
    parts = key.split(".")
    node = out
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key}: {part} is not a table")
    node[parts[-1]] = value
    return out
