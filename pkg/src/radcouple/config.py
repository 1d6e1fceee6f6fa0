"""Experiment configuration: a versioned JSON document checked against a schema.

Example::

    {
      "schema": 1,
      "model": {"kind": "SpaceForm", "dim": 2, "K": -1.0},
      "coupling": {"mode": "endpoint_reflection", "j_r": 1.0},
      "integrator": {"r0": 1.0, "T": 10.0, "dt": 0.001, "n_paths": 100, "seed": 7},
      "output": {"dir": "out", "prefix": "h2"}
    }

Everything is validated when the file is loaded, before any simulation runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from ._validation import check_time_grid
from .control import CouplingControl, CouplingMatrices, reflection_control, synchronous_control
from .exceptions import ConfigError, DomainError
from .geometry import (
    PerturbedHyperbolic,
    RankOneSymmetric,
    RotSym,
    SpaceForm,
    perturbed_sinh_profile,
    sin_profile,
    sinh_profile,
    space_form_profile,
)
from .sde import (
    ControlSchedule,
    constant_target,
    endpoint_target,
    mean_curvature_target,
    window_fraction_target,
)

__all__ = [
    "SCHEMA",
    "DEFAULT_CHECKS",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "build_model",
    "oracle_space",
    "is_flat",
]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg_int = {"type": "integer", "minimum": 0}

_MODEL = {
    "type": "object",
    "required": ["kind", "dim"],
    "properties": {
        "kind": {"enum": ["SpaceForm", "RotSym", "RankOneSymmetric", "PerturbedHyperbolic"]},
        "dim": {"type": "integer", "minimum": 2},
        "K": _num,
        "profile": {
            "type": "object",
            "required": ["name"],
            "properties": {
                "name": {"enum": ["sinh", "sin", "space_form", "perturbed_sinh"]},
                "b": _pos,
                "K": _num,
                "coefficients": {"type": "object", "additionalProperties": _num},
            },
            "additionalProperties": False,
        },
        "type": {"enum": ["compact", "noncompact"]},
        "alpha": _pos,
        "m_alpha": {"type": "integer", "minimum": 1},
        "m_2alpha": _nonneg_int,
        "b": _pos,
        "c": _num,
    },
    "additionalProperties": False,
}

_LAW = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["constant", "mean_curvature", "endpoint", "window_fraction"]},
        "speed": _num,
        "upper": {"type": "boolean"},
        "fraction": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "additionalProperties": False,
}

_COUPLING = {
    "type": "object",
    "required": ["mode"],
    "properties": {
        "mode": {
            "enum": [
                "constant_control",
                "target_speed_function",
                "endpoint_synchronous",
                "endpoint_reflection",
                "matrices",
                "radial_process",
            ]
        },
        "alphas": {
            "type": "array",
            "items": {"type": "array", "prefixItems": [_num, {"type": "integer", "minimum": 1}],
                      "minItems": 2, "maxItems": 2},
        },
        "j_r": {"type": "number", "minimum": -1, "maximum": 1},
        "k_r": {"type": "number", "minimum": 0},
        "law": _LAW,
        "J": {"type": "array", "items": {"type": "array", "items": _num}},
    },
    "additionalProperties": False,
}

_INTEGRATOR = {
    "type": "object",
    "properties": {
        "r0": {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]},
        "T": _pos,
        "dt": _pos,
        "n_paths": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "record_every": {"type": "integer", "minimum": 1},
        "burn_in_fraction": {"type": "number", "minimum": 0, "maximum": 0.9},
    },
    "additionalProperties": False,
}

_ORACLE = {
    "type": "object",
    "properties": {
        "T": _pos,
        "dt": _pos,
        "n_paths": {"type": "integer", "minimum": 1},
        "bin_width": _pos,
    },
    "additionalProperties": False,
}

_GRID = {
    "oneOf": [
        {"type": "array", "items": _pos, "minItems": 1},
        {
            "type": "object",
            "required": ["start", "stop", "num"],
            "properties": {"start": _pos, "stop": _pos, "num": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
    ]
}

DEFAULT_CHECKS = {
    "se_multiplier": 3.0,
    "bias_constant": "fit",
    "min_bin_samples": 1000,
    "at_r": None,
    "check_window": True,
    "check_reduced": True,
    "fd_factor": 10.0,
    "alpha_tol": 1e-12,
    "qv_rel_tol": 0.05,
    "equality_defect_tol": 1e-12,
    "band_factor": 5.0,
    "slope_rel_tol": 0.01,
    "sublinear_tol": 0.05,
}

_CHECKS = {
    "type": "object",
    "properties": {
        "se_multiplier": _pos,
        "bias_constant": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "fit"}]},
        "min_bin_samples": {"type": "integer", "minimum": 1},
        "at_r": {"oneOf": [_pos, {"type": "null"}]},
        "check_window": {"type": "boolean"},
        "check_reduced": {"type": "boolean"},
        "fd_factor": _pos,
        "alpha_tol": {"type": "number", "minimum": 0},
        "qv_rel_tol": {"type": "number", "minimum": 0},
        "equality_defect_tol": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "null"}]},
        "band_factor": _pos,
        "slope_rel_tol": _pos,
        "sublinear_tol": _pos,
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "model"],
    "properties": {
        "schema": {"const": 1},
        "model": _MODEL,
        "grid": _GRID,
        "coupling": _COUPLING,
        "integrator": _INTEGRATOR,
        "oracle": _ORACLE,
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "prefix": {"type": "string", "minLength": 1}},
            "additionalProperties": False,
        },
        "checks": _CHECKS,
    },
    "additionalProperties": False,
}

_MODEL_FIELDS = {
    "SpaceForm": {"K"},
    "RotSym": {"profile"},
    "RankOneSymmetric": {"type", "alpha", "m_alpha", "m_2alpha"},
    "PerturbedHyperbolic": {"b", "c"},
}


def _need(block, keys, where):
    missing = [k for k in keys if k not in block]
    if missing:
        raise ConfigError(f"{where}: missing {', '.join(missing)}")


def _build_profile(spec):
    name = spec["name"]
    if name == "space_form":
        _need(spec, ["K"], "model.profile")
        return space_form_profile(spec["K"])
    _need(spec, ["b"], "model.profile")
    if name == "sinh":
        return sinh_profile(spec["b"])
    if name == "sin":
        return sin_profile(spec["b"])
    return perturbed_sinh_profile(spec["b"], {int(k): c for k, c in spec.get("coefficients", {}).items()})


def build_model(spec):
    """Model manifold from a ``model`` block."""
    kind = spec["kind"]
    extra = set(spec) - {"kind", "dim"} - _MODEL_FIELDS[kind]
    if extra:
        raise ConfigError(f"model: fields {sorted(extra)} do not apply to {kind}")
    dim = spec["dim"]
    if kind == "SpaceForm":
        _need(spec, ["K"], "model")
        return SpaceForm(dim, float(spec["K"]))
    if kind == "RotSym":
        _need(spec, ["profile"], "model")
        return RotSym(dim, _build_profile(spec["profile"]))
    if kind == "RankOneSymmetric":
        _need(spec, ["type", "alpha", "m_alpha"], "model")
        return RankOneSymmetric(dim, spec["type"], float(spec["alpha"]), spec["m_alpha"], spec.get("m_2alpha", 0))
    _need(spec, ["b", "c"], "model")
    return PerturbedHyperbolic(dim, float(spec["b"]), float(spec["c"]))


def _build_law(model, law):
    kind = law["type"]
    if kind == "constant":
        _need(law, ["speed"], "coupling.law")
        return constant_target(law["speed"])
    if kind == "mean_curvature":
        return mean_curvature_target(model)
    if kind == "endpoint":
        return endpoint_target(model, law.get("upper", True))
    _need(law, ["fraction"], "coupling.law")
    frac = float(law["fraction"])
    return window_fraction_target(model, lambda t: frac)


@dataclass(frozen=True)
class CouplingSpec:
    """Parsed ``coupling`` block.

    ``schedule`` drives the reduced simulator; ``control`` or ``matrices``
    (when representable) drive the oracle.
    """

    mode: str
    schedule: ControlSchedule | None = None
    control: CouplingControl | None = None
    matrices: CouplingMatrices | None = None
    law: dict | None = None


def _build_coupling(model, spec):
    mode = spec["mode"]
    n = model.dim
    j_r = spec.get("j_r", 1.0)
    if mode == "constant_control":
        _need(spec, ["alphas"], "coupling")
        control = CouplingControl(tuple(map(tuple, spec["alphas"])), j_r=j_r, k_r=spec.get("k_r"))
        if control.multiplicity != n - 1:
            raise ConfigError(f"coupling.alphas: multiplicities sum to {control.multiplicity}, need {n - 1}")
        return CouplingSpec(mode, ControlSchedule.constant(control), control)
    if mode == "endpoint_synchronous":
        return CouplingSpec(mode, ControlSchedule.synchronous(), synchronous_control(n))
    if mode == "endpoint_reflection":
        return CouplingSpec(mode, ControlSchedule.reflection(j_r), reflection_control(n, j_r))
    if mode == "target_speed_function":
        _need(spec, ["law"], "coupling")
        return CouplingSpec(mode, ControlSchedule.target(_build_law(model, spec["law"])), law=spec["law"])
    if mode == "matrices":
        _need(spec, ["J"], "coupling")
        try:
            J = np.asarray(spec["J"], dtype=float)
        except ValueError as exc:
            raise ConfigError(f"coupling.J: {exc}") from None
        if J.shape != (n, n):
            raise ConfigError(f"coupling.J must be {n}x{n}, got shape {J.shape}")
        return CouplingSpec(mode, matrices=CouplingMatrices(J))
    return CouplingSpec(mode)


def _grid_values(grid):
    if isinstance(grid, dict):
        if grid["stop"] < grid["start"]:
            raise ConfigError("grid: stop < start")
        return tuple(float(v) for v in np.linspace(grid["start"], grid["stop"], grid["num"]))
    return tuple(float(v) for v in grid)


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    model: object
    coupling: CouplingSpec | None
    grid: tuple
    r0: tuple
    T: float
    dt: float
    n_paths: int
    seed: int
    record_every: int
    burn_in_fraction: float
    oracle: dict
    out_dir: Path
    prefix: str
    checks: dict = field(default_factory=dict)

    def with_overrides(self, seed=None, out_dir=None):
        kw = dict(self.__dict__)
        if seed is not None:
            kw["seed"] = int(seed)
        if out_dir is not None:
            kw["out_dir"] = Path(out_dir)
        return ExperimentConfig(**kw)


def parse_config(raw):
    """Validate a decoded JSON document and build the experiment objects.

    Raises
    ------
    ConfigError
        On schema violations or inconsistent fields.
    DomainError
        If a value is well-formed but outside a module's domain.
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {err.message}")

    model = build_model(raw["model"])
    coupling = _build_coupling(model, raw["coupling"]) if "coupling" in raw else None
    grid = _grid_values(raw["grid"]) if "grid" in raw else ()
    for r in grid:
        if r >= model.r_max:
            raise DomainError(f"grid value {r} at or beyond r_max={model.r_max}")

    integ = raw.get("integrator", {})
    r0 = integ.get("r0", 1.0)
    r0 = tuple(float(v) for v in (r0 if isinstance(r0, list) else [r0]))
    for r in r0:
        if r >= model.r_max:
            raise DomainError(f"r0={r} at or beyond r_max={model.r_max}")
    T = float(integ.get("T", 1.0))
    dt = float(integ.get("dt", 1e-3))
    n_steps = check_time_grid(T, dt)
    record_every = integ.get("record_every", 1)
    if n_steps % record_every:
        raise ConfigError(f"integrator.record_every={record_every} must divide the {n_steps} steps")

    oracle = dict(raw.get("oracle", {}))
    oracle.setdefault("T", T)
    oracle.setdefault("dt", dt)
    oracle.setdefault("n_paths", integ.get("n_paths", 1000))
    check_time_grid(oracle["T"], oracle["dt"])

    checks = dict(DEFAULT_CHECKS)
    checks.update(raw.get("checks", {}))
    out = raw.get("output", {})
    return ExperimentConfig(
        raw=raw,
        model=model,
        coupling=coupling,
        grid=grid,
        r0=r0,
        T=T,
        dt=dt,
        n_paths=integ.get("n_paths", 1000),
        seed=integ.get("seed", 0),
        record_every=record_every,
        burn_in_fraction=float(integ.get("burn_in_fraction", 0.5)),
        oracle=oracle,
        out_dir=Path(out.get("dir", ".")),
        prefix=out.get("prefix", "run"),
        checks=checks,
    )


def load_config(path):
    """Read and validate a JSON config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(raw)


def oracle_space(model):
    """``"S"``, ``"H"`` or ``"R"`` for unit space forms; otherwise a ConfigError."""
    if isinstance(model, SpaceForm) and model.K in (1.0, -1.0, 0.0):
        return {1.0: "S", -1.0: "H", 0.0: "R"}[model.K]
    raise ConfigError("the oracle needs a SpaceForm model with K in {-1, 0, 1}")


def is_flat(model):
    return isinstance(model, SpaceForm) and model.K == 0 or (
        isinstance(model, RotSym) and model.profile.name == "r"
    )
