"""Run configuration: schema, loading, defaults and scenario construction.

A configuration is a nested mapping written in YAML (or JSON, the same
schema) with five blocks::

    scenario:   {builder: cantor, params: {gamma: 0.3, beta: 0.3, depth: 8}}
    kernel:     {family: powertail, exponent: 1.0}
    integrator: {method: rk45, rtol: 1.0e-10, atol: 1.0e-15, tol_align: 1.0e-12}
    analysis:   {n_pairs: 1000, dimension: {kind: box}}
    output:     {dir: out}

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .dynamics import IntegratorConfig
from .errors import ConfigError
from .kernel import make_kernel
from .scenario import (Scenario, cantor_scenario, constant_kernel_oracle, expression_scenario,
                       generic_scenario, plateau_scenario, powerlaw_scenario, ring_scenario_2d,
                       supercritical_scenario)

__all__ = ["SCHEMA", "DEFAULTS", "BUILDERS", "RunConfig", "load_config", "parse_config",
           "build_scenario"]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_opt_pos = {"type": ["number", "null"], "exclusiveMinimum": 0}
_int = {"type": "integer", "minimum": 1}

BUILDERS = ("oracle", "generic", "supercritical", "cantor", "powerlaw", "plateau", "disk",
            "annulus", "expression")

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario"],
    "properties": {
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "required": ["builder"],
            "properties": {
                "builder": {"enum": list(BUILDERS)},
                "params": {"type": "object"},
            },
        },
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["constant", "powertail", "tabulated"]},
                "amplitude": _pos,
                "exponent": _pos,
                "scale": _pos,
                "radii": {"type": "array", "items": _num, "minItems": 2},
                "values": {"type": "array", "items": _num, "minItems": 2},
                "heavy_tailed": {"type": ["boolean", "null"]},
            },
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["rk4", "rk45"]},
                "dt": _opt_pos,
                "rtol": _pos,
                "atol": _pos,
                "t_max": _pos,
                "tol_align": _pos,
                "tau": _opt_pos,
                "tail_frames": {"type": "integer", "minimum": 0},
                "breakdown": {"type": "boolean"},
                "eps_stop": _pos,
                "record_times": {"type": ["array", "null"], "items": _pos},
                "deformation": {"type": "boolean"},
                "engine": {"enum": ["auto", "direct", "chebyshev"]},
                "max_steps": _int,
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_pairs": {"type": "integer", "minimum": 0},
                "slack": {"type": "number", "minimum": 0},
                "limit_frames": {"type": "integer", "minimum": 2},
                "eps_z": {"type": ["number", "null"], "minimum": 0},
                "oversample": _int,
                "checks": {"type": "boolean"},
                "dimension": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["auto", "box", "local"]},
                        "x": _num,
                        "radii": {"type": ["array", "null"], "items": _pos},
                        "r_min": _opt_pos,
                        "r_max": _opt_pos,
                        "min_points": {"type": "integer", "minimum": 2},
                    },
                },
                "stability": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "eps": {"type": "array", "items": _pos, "minItems": 1},
                        "psi": {"type": ["string", "null"]},
                    },
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "trajectory_csv": {"type": "boolean"},
            },
        },
    },
}

DEFAULTS: dict[str, Any] = {
    "scenario": {"params": {}},
    "kernel": None,
    "integrator": IntegratorConfig().to_dict(),
    "analysis": {"n_pairs": 1000, "slack": 1e-3, "limit_frames": 3, "eps_z": None,
                 "oversample": 1, "checks": True,
                 "dimension": {"kind": "auto", "x": 0.0, "radii": None, "r_min": None,
                               "r_max": None, "min_points": 5},
                 "stability": {"eps": [1e-3, 5e-4], "psi": None}},
    "output": {"dir": "out", "trajectory_csv": True},
}
DEFAULTS["integrator"].pop("workers")


def _merge(base, over):
    if not isinstance(base, dict) or not isinstance(over, dict):
        return copy.deepcopy(over)
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = _merge(out.get(k), v) if k in out and out[k] is not None else copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    """A validated configuration with every default filled in."""

    raw: dict
    resolved: dict

    @property
    def scenario(self) -> dict:
        return self.resolved["scenario"]

    @property
    def analysis(self) -> dict:
        return self.resolved["analysis"]

    @property
    def output(self) -> dict:
        return self.resolved["output"]

    def integrator(self, workers: int = 1) -> IntegratorConfig:
        d = dict(self.resolved["integrator"])
        if d.get("record_times") is not None:
            d["record_times"] = tuple(d["record_times"])
        return IntegratorConfig(workers=workers, **d)


def _path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def parse_config(data: Any) -> RunConfig:
    """Validate a mapping against ``SCHEMA`` and fill defaults.

    Raises
    ------
    ConfigError
        With the dotted path of the first offending field.
    """
    if not data:
        raise ConfigError("empty configuration")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        e = errors[0]
        raise ConfigError(f"{_path(e)}: {e.message}")
    return RunConfig(copy.deepcopy(data), _merge(DEFAULTS, data))


def load_config(path: str | Path) -> RunConfig:
    """Read a YAML or JSON configuration file (chosen by extension)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    return parse_config(data)


_KERNEL_BUILDERS = {"cantor", "powerlaw", "plateau", "disk", "annulus", "expression"}


def build_scenario(cfg: RunConfig) -> Scenario:
    """Construct the scenario named by the ``scenario`` block.

    Raises
    ------
    ConfigError
        On unknown builder parameters or a kernel block given to a builder
        with a fixed kernel.
    """
    sc = cfg.scenario
    name, params = sc["builder"], dict(sc.get("params") or {})
    engine = cfg.resolved["integrator"].get("engine", "auto")
    kblock = cfg.resolved.get("kernel")
    if kblock is not None and name not in _KERNEL_BUILDERS:
        raise ConfigError(f"kernel: builder {name!r} uses a fixed kernel")
    kernel = None
    if kblock is not None:
        dim = 2 if name in ("disk", "annulus") else 1
        kernel = make_kernel({k: v for k, v in kblock.items() if v is not None}, dim)
    try:
        if name == "oracle":
            return constant_kernel_oracle(engine=engine, **params)
        if name == "generic":
            return generic_scenario(engine=engine, **params)
        if name == "supercritical":
            return supercritical_scenario(engine=engine, **params)
        if name == "expression":
            if kernel is None:
                raise ConfigError("kernel: required by the expression builder")
            return expression_scenario(kernel=kernel, engine=engine, **params)
        builder = {"cantor": cantor_scenario, "powerlaw": powerlaw_scenario,
                   "plateau": plateau_scenario}.get(name)
        if builder is not None:
            return builder(kernel=kernel, engine=engine, **params)
        params.setdefault("r_in", 0.0 if name == "disk" else 0.3)
        params.setdefault("r_out", 0.5 if name == "disk" else 0.6)
        if name == "disk" and params["r_in"] != 0:
            raise ConfigError("scenario.params.r_in: must be 0 for the disk builder")
        return ring_scenario_2d(kernel=kernel, engine=engine, **params)
    except TypeError as exc:
        raise ConfigError(f"scenario.params: {exc}") from exc
