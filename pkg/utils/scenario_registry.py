#!/usr/bin/env python3
"""
Scenario registry: the YAML scenario schema and the built-in named scenarios.
"""

from collections import OrderedDict
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cmdf.config import DEFAULT_TOLERANCES
from cmdf.errors import CMDFError, ScenarioError
from cmdf.network import (
    complete_graph,
    metropolis_weights,
    path_graph,
    random_geometric,
    read_edge_list,
    uniform_weights,
)
from cmdf.model import SensorModel, SystemModel, check_sensors
from cmdf.simulate import TrialConfig, paper_scenario

Matrix = list[list[float]]


class SystemSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    A: Matrix
    Q: Matrix

    def build(self):
        return SystemModel(np.array(self.A), np.array(self.Q))


class SensorSpec(BaseModel):
    """One sensor type, repeated ``count`` times; ``naive: true`` needs no C or R."""

    model_config = ConfigDict(extra="forbid")

    C: Matrix | None = None
    R: Matrix | float | None = None
    naive: bool = False
    count: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _needs_observation(self):
        if not self.naive and (self.C is None or self.R is None):
            raise ValueError("a sensor needs C and R unless it is naive")
        return self

    def build(self, n):
        if self.naive:
            return [SensorModel.naive(n) for _ in range(self.count)]
        R = np.atleast_2d(np.array(self.R, dtype=float))
        return [SensorModel(np.array(self.C, dtype=float), R) for _ in range(self.count)]


class GraphSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["random_geometric", "edge_list", "complete", "path"] = "random_geometric"
    N: int | None = Field(default=None, ge=1)
    width: float | None = Field(default=None, gt=0)
    radius: float | None = Field(default=None, gt=0)
    seed: int = 1
    path: str | None = None

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind == "edge_list" and not self.path:
            raise ValueError("an edge_list graph needs 'path'")
        if self.kind != "edge_list" and self.N is None:
            raise ValueError(f"a {self.kind} graph needs 'N'")
        if self.kind == "random_geometric" and (self.width is None or self.radius is None):
            raise ValueError("a random_geometric graph needs 'width' and 'radius'")
        return self

    def build(self, base_dir=None, seed=None):
        if self.kind == "random_geometric":
            return random_geometric(self.N, self.width, self.radius, self.seed if seed is None else seed)
        if self.kind == "complete":
            return complete_graph(self.N)
        if self.kind == "path":
            return path_graph(self.N)
        path = Path(self.path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return read_edge_list(path)


class TrialSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = Field(default=200, ge=1)
    trials: int = Field(default=1000, ge=1)
    seed: int = 0
    eval_window: int = Field(default=1, ge=1)
    x0: list[float] | None = None
    P0: Matrix | None = None

    def build(self, **overrides):
        values = self.model_dump()
        values.update({k: v for k, v in overrides.items() if v is not None})
        for key in ("x0", "P0"):
            if values[key] is not None:
                values[key] = np.array(values[key], dtype=float)
        return TrialConfig(**values)


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "custom"
    system: SystemSpec
    sensors: list[SensorSpec]
    graph: GraphSpec
    weights: Literal["metropolis", "uniform"] = "metropolis"
    fusion_depths: list[int] = Field(default_factory=list)
    trials: TrialSpec = Field(default_factory=TrialSpec)
    tolerances: dict[str, float] = Field(default_factory=dict)
    output_dir: str | None = None
    base_dir: str | None = None

    def build_system(self):
        return self.system.build()

    def build_sensors(self, n):
        sensors = []
        for spec in self.sensors:
            sensors.extend(spec.build(n))
        return sensors

    def build_graph(self, seed=None):
        return self.graph.build(self.base_dir, seed)

    def build_weights(self, g):
        if self.weights == "uniform":
            return uniform_weights(g.node_count)
        return metropolis_weights(g)

    def validate_models(self):
        """Build the system and sensors once so model invariants are checked on load."""
        unknown = sorted(set(self.tolerances) - set(DEFAULT_TOLERANCES))
        if unknown:
            raise ScenarioError(f"Unknown tolerances: {', '.join(unknown)}. Known: {', '.join(DEFAULT_TOLERANCES)}")
        system = self.build_system()
        sensors = self.build_sensors(system.n)
        N = self.graph.N
        check_sensors(system, sensors, N)
        return system, sensors


def _paper_scenario_dict():
    system, sensors, graph = paper_scenario()
    return {
        "name": "paper",
        "system": {"A": system.A.tolist(), "Q": system.Q.tolist()},
        "sensors": [
            {"C": sensors[0].C.tolist(), "R": sensors[0].R.tolist(), "count": 3},
            {"C": sensors[3].C.tolist(), "R": sensors[3].R.tolist(), "count": 3},
            {"naive": True, "count": 14},
        ],
        "graph": {"kind": "random_geometric", "N": graph.N, "width": graph.width, "radius": graph.radius, "seed": 1},
        "weights": "metropolis",
        "trials": {"steps": 200, "trials": 1000, "seed": 0},
    }


_TRACKING = paper_scenario().system

# Named scenarios, in display order
BUILTIN_SCENARIOS = OrderedDict([
    ("paper", _paper_scenario_dict()),
    ("complete", {
        "name": "complete",
        "system": {"A": _TRACKING.A.tolist(), "Q": _TRACKING.Q.tolist()},
        "sensors": [
            {"C": [[1.0, 0.0, 0.0, 0.0]], "R": 1.0},
            {"C": [[0.0, 0.0, 1.0, 0.0]], "R": 1.0},
            {"naive": True, "count": 3},
        ],
        "graph": {"kind": "complete", "N": 5},
        "weights": "uniform",
        "trials": {"steps": 200, "trials": 200, "seed": 0},
    }),
    ("chain", {
        "name": "chain",
        "system": {"A": _TRACKING.A.tolist(), "Q": _TRACKING.Q.tolist()},
        "sensors": [
            {"C": [[1.0, 0.0, 0.0, 0.0]], "R": 1.0},
            {"naive": True, "count": 3},
            {"C": [[0.0, 0.0, 1.0, 0.0]], "R": 1.0},
        ],
        "graph": {"kind": "path", "N": 5},
        "weights": "metropolis",
        "trials": {"steps": 200, "trials": 200, "seed": 0},
    }),
])


def _validate(raw, origin):
    try:
        scenario = Scenario.model_validate(raw)
    except ValidationError as e:
        raise ScenarioError(f"Invalid scenario {origin}:\n{e}") from e
    try:
        scenario.validate_models()
    except CMDFError as e:
        raise ScenarioError(f"Invalid scenario {origin}: {e}") from e
    return scenario


def get_builtin_scenario(name):
    """Get a built-in scenario by name.

    Raises:
        ScenarioError: if ``name`` is not registered
    """
    if name not in BUILTIN_SCENARIOS:
        raise ScenarioError(
            f"Unknown built-in scenario '{name}'. Available: {', '.join(BUILTIN_SCENARIOS)}"
        )
    return _validate(BUILTIN_SCENARIOS[name], f"'{name}'")


def load_scenario(path):
    """Load and validate a YAML scenario file; relative edge-list paths resolve against its directory."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"Scenario file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ScenarioError(f"Cannot parse {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ScenarioError(f"Scenario file {path} must contain a mapping")
    raw.setdefault("name", path.stem)
    raw.setdefault("base_dir", str(path.parent))
    return _validate(raw, str(path))


def get_all_scenarios():
    """Get list of all built-in scenario names."""
    return list(BUILTIN_SCENARIOS.keys())
