"""Scenario files: schema validation, loading, and the built-in benchmark systems."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import expr as ex
from .conservation.cartan import EnergyFunction, ExpressionFunction, ScalarFunction
from .conservation.mechanical import CTensor
from .conservation.noether import CandidateField
from .constraint import ConstrainedSystem
from .geometry import Chart, DistributionD, TangentState, VectorFieldQ
from .lagrangian import GeneralLagrangian, Lagrangian, MechanicalLagrangian

__all__ = [
    "Scenario",
    "ScenarioError",
    "SCHEMA",
    "ENERGY_NAME",
    "load",
    "loads",
    "builtin",
    "builtin_names",
]

ENERGY_NAME = "E_L"

_STR = {"type": "string"}
_NUM = {"type": "number"}
_STR_LIST = {"type": "array", "items": _STR}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["name", "dimension", "coordinates", "lagrangian", "constraints", "domain"],
    "additionalProperties": False,
    "properties": {
        "name": _STR,
        "dimension": {"type": "integer", "minimum": 1},
        "coordinates": {"type": "array", "items": {"type": "string", "pattern": "^[A-Za-z][A-Za-z0-9]*$"},
                        "minItems": 1},
        "lagrangian": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["type", "source"],
                 "properties": {"type": {"const": "expression"}, "source": _STR}},
                {"type": "object", "additionalProperties": False, "required": ["type", "metric"],
                 "properties": {"type": {"const": "mechanical"},
                                "metric": {"type": "array", "items": _STR_LIST},
                                "potential": _STR}},
            ]
        },
        "constraints": {"type": "object", "additionalProperties": False, "required": ["basis"],
                        "properties": {"basis": {"type": "array", "items": _STR_LIST, "minItems": 1}}},
        "domain": {"type": "object", "additionalProperties": False, "required": ["min", "max"],
                   "properties": {"min": {"type": "array", "items": _NUM},
                                  "max": {"type": "array", "items": _NUM}}},
        "fields": {"type": "object", "additionalProperties": {
            "oneOf": [
                _STR_LIST,
                {"type": "object", "additionalProperties": False, "required": ["components"],
                 "properties": {"components": _STR_LIST, "gauge": _STR}},
            ]}},
        "integrals": {"type": "object", "additionalProperties": _STR},
        "tensors": {"type": "object", "additionalProperties": {
            "type": "object", "additionalProperties": False, "required": ["degree", "components"],
            "properties": {
                "degree": {"type": "integer", "minimum": 2},
                "components": {"type": "object",
                               "propertyNames": {"pattern": "^[1-9][0-9]*(,[1-9][0-9]*)*$"},
                               "additionalProperties": {"type": ["string", "number"]}},
                "f": _STR,
                "basis": {"enum": ["distribution", "coordinates"]},
            }}},
        "defaults": {"type": "object", "additionalProperties": False, "properties": {
            "t_end": {"type": "number", "minimum": 0},
            "step": {"type": "number", "exclusiveMinimum": 0},
            "seed": {"type": "integer", "minimum": 0},
            "tol": {"type": "number", "exclusiveMinimum": 0}}},
        "initial": {"type": "object", "additionalProperties": False, "required": ["q", "u"],
                    "properties": {"q": {"type": "array", "items": _NUM},
                                   "u": {"type": "array", "items": _NUM}}},
    },
}

DEFAULTS = {"t_end": 10.0, "step": 1e-3, "seed": 42, "tol": 1e-9}


class ScenarioError(ValueError):
    """Invalid scenario; ``pointer`` is a JSON pointer to the offending value."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


def _pointer(path) -> str:
    return "".join(f"/{str(p).replace('~', '~0').replace('/', '~1')}" for p in path)


@dataclass
class Scenario:
    name: str
    chart: Chart
    lagrangian: Lagrangian
    distribution: DistributionD
    fields: dict[str, CandidateField] = field(default_factory=dict)
    integrals: dict[str, ExpressionFunction] = field(default_factory=dict)
    tensors: dict[str, CTensor] = field(default_factory=dict)
    defaults: dict[str, float] = field(default_factory=lambda: dict(DEFAULTS))
    initial: TangentState | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def m(self) -> int:
        return self.distribution.m

    @cached_property
    def system(self) -> ConstrainedSystem:
        return ConstrainedSystem(self.lagrangian, self.distribution)

    def integral(self, name: str) -> ScalarFunction:
        if name == ENERGY_NAME:
            return EnergyFunction()
        return self.integrals[name]

    def initial_state(self) -> TangentState:
        """Declared initial state, or the base-box centre with v^alpha = 1."""
        if self.initial is not None:
            return self.initial
        lo, hi = self.distribution.domain
        return self.system.state_on_c(0.5 * (lo + hi), np.ones(self.m))


def _parse(chart: Chart, source: str, pointer: str, velocities: bool = True) -> ex.Node:
    try:
        return chart.parse(source, velocities=velocities)
    except ex.ExpressionError as err:
        raise ScenarioError(str(err), pointer) from err


def _build(data: dict) -> Scenario:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ScenarioError(err.message, _pointer(err.absolute_path)) from err
    n = data["dimension"]
    coords = data["coordinates"]
    if len(coords) != n:
        raise ScenarioError(f"expected {n} coordinate names", "/coordinates")
    if len(set(coords)) != n:
        raise ScenarioError("coordinate names must be distinct", "/coordinates")
    chart = Chart(n, coords)

    lag = data["lagrangian"]
    if lag["type"] == "expression":
        L: Lagrangian = GeneralLagrangian(chart, _parse(chart, lag["source"], "/lagrangian/source"))
    else:
        metric = lag["metric"]
        if len(metric) != n or any(len(r) != n for r in metric):
            raise ScenarioError(f"metric must be {n} x {n}", "/lagrangian/metric")
        nodes = [[_parse(chart, s, f"/lagrangian/metric/{i}/{j}", False) for j, s in enumerate(row)]
                 for i, row in enumerate(metric)]
        pot = _parse(chart, lag.get("potential", "0"), "/lagrangian/potential", False)
        L = MechanicalLagrangian(chart, nodes, pot)

    dom = data["domain"]
    if len(dom["min"]) != n or len(dom["max"]) != n:
        raise ScenarioError(f"domain bounds need {n} entries", "/domain")
    if any(a > b for a, b in zip(dom["min"], dom["max"])):
        raise ScenarioError("domain min exceeds max", "/domain")

    basis = []
    for k, comps in enumerate(data["constraints"]["basis"]):
        if len(comps) != n:
            raise ScenarioError(f"expected {n} components", f"/constraints/basis/{k}")
        basis.append(VectorFieldQ(chart, [_parse(chart, s, f"/constraints/basis/{k}/{i}", False)
                                          for i, s in enumerate(comps)]))
    D = DistributionD(basis, (dom["min"], dom["max"]))

    fields = {}
    for name, spec in data.get("fields", {}).items():
        comps, gauge = (spec, None) if isinstance(spec, list) else (spec["components"], spec.get("gauge"))
        if len(comps) != n:
            raise ScenarioError(f"expected {n} components", f"/fields/{name}")
        Z = VectorFieldQ(chart, [_parse(chart, s, f"/fields/{name}/{i}", False) for i, s in enumerate(comps)])
        g = _parse(chart, gauge, f"/fields/{name}/gauge", False) if gauge is not None else None
        fields[name] = CandidateField(Z, g, name)

    integrals = {}
    for name, src in data.get("integrals", {}).items():
        if name == ENERGY_NAME:
            raise ScenarioError(f"'{ENERGY_NAME}' is reserved for the energy", f"/integrals/{name}")
        integrals[name] = ExpressionFunction(chart, _parse(chart, src, f"/integrals/{name}"), name)

    tensors = {}
    for name, spec in data.get("tensors", {}).items():
        deg = spec["degree"]
        basis_kind = spec.get("basis", "distribution")
        size = D.m if basis_kind == "distribution" else n
        comps = {}
        for key, val in spec["components"].items():
            ptr = f"/tensors/{name}/components/{key}"
            idx = tuple(int(i) - 1 for i in key.split(","))
            if len(idx) != deg or any(i >= size for i in idx):
                raise ScenarioError(f"index does not fit a degree-{deg} tensor of size {size}", ptr)
            comps[idx] = _parse(chart, str(val), ptr, False)
        f = _parse(chart, spec.get("f", "0"), f"/tensors/{name}/f", False)
        try:
            tensors[name] = CTensor(chart, deg, comps, f, basis_kind, size, name)
        except ValueError as err:
            raise ScenarioError(str(err), f"/tensors/{name}") from err

    defaults = dict(DEFAULTS)
    defaults.update(data.get("defaults", {}))
    initial = None
    if "initial" in data:
        q, u = data["initial"]["q"], data["initial"]["u"]
        if len(q) != n or len(u) != n:
            raise ScenarioError(f"initial state needs {n} entries", "/initial")
        initial = TangentState(q, u)
    return Scenario(data["name"], chart, L, D, fields, integrals, tensors, defaults, initial, data)


def loads(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"invalid JSON: {err.msg} at line {err.lineno} column {err.colno}") from err
    return _build(data)


def load(path: str | Path) -> Scenario:
    """Load and validate a scenario file (OSError propagates for missing files)."""
    return loads(Path(path).read_text(encoding="utf-8"))


def builtin_names() -> list[str]:
    root = resources.files("nhcartan") / "builtins"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def builtin(name: str) -> Scenario:
    if name not in builtin_names():
        raise KeyError(f"unknown built-in scenario '{name}'; available: {', '.join(builtin_names())}")
    text = (resources.files("nhcartan") / "builtins" / f"{name}.json").read_text(encoding="utf-8")
    return loads(text)
