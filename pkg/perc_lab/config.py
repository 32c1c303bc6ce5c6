# perc_lab/config.py

"""
Experiment configuration: YAML files validated against JSON Schema, with
unknown keys rejected at every level.

A config has four sections::

    graph:        {kind: zd_box, d: 2, side: 65}
    percolation:  {p: 0.7, q: 0.8, eps: 0.25, seed: 7, samples: 1000}
    experiment:   {kind: volume-tail, params: {n_grid: [10, 20], radius: 30}}
    output:       {directory: runs, formats: [csv, json]}
"""

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import jsonschema
import yaml

from .constants import DEFAULT_OUT_DIR
from .errors import ConfigError
from .graphs import GRAPH_KINDS, GraphSpec

_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_POS_NUMBER = {"type": "number", "exclusiveMinimum": 0}
_INT_LIST = {"type": "array", "items": _POS_INT, "minItems": 1}
_NONNEG_INT_LIST = {"type": "array", "items": _NONNEG_INT, "minItems": 1}
_PROB_LIST = {"type": "array", "items": _PROB, "minItems": 1}

SET_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["shape"],
    "properties": {
        "shape": {"enum": ["origin", "box", "ball", "vertices", "ids"]},
        "side": _POS_INT,
        "radius": _NONNEG_INT,
        "vertices": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}, "minItems": 1},
        "ids": {"type": "array", "items": _NONNEG_INT, "minItems": 1},
    },
}

PHI_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["source"],
    "properties": {
        "source": {"enum": ["profile", "power"]},
        "n_max": _POS_INT,
        "exponent": _POS_NUMBER,
        "coefficient": _POS_NUMBER,
    },
}


def _params(required=(), **properties) -> dict:
    properties.setdefault("samples", _POS_INT)
    return {
        "type": "object",
        "additionalProperties": False,
        "required": list(required),
        "properties": properties,
    }


# Per-kind parameter schemas; every kind also accepts ``samples``.
PARAM_SCHEMAS: Dict[str, dict] = {
    "phi-profile": _params(["n_max"], n_max=_POS_INT, budget=_POS_INT, tier1_n_max=_NONNEG_INT,
                           fit={"type": "boolean"}),
    "phi-of-set": _params(["set"], set=SET_SCHEMA, r_schedule=_INT_LIST,
                          flow={"enum": ["dinitz", "edmonds_karp"]}),
    "geometry-check": _params(["eps"], eps=_POS_NUMBER, set=SET_SCHEMA, random_sets=_NONNEG_INT,
                              max_size=_POS_INT, profile_n_max=_POS_INT),
    "layers-check": _params([], exact_edges=_NONNEG_INT),
    "volume-tail": _params(["n_grid", "radii"], n_grid=_INT_LIST, radii=_INT_LIST),
    "radius-tail": _params(["ns", "radius"], ns=_INT_LIST, radius=_POS_INT),
    "decay-fit": _params(["n_grid", "radius"], n_grid=_INT_LIST, radius=_POS_INT,
                         curve={"enum": ["volume", "radius"]}, phi=PHI_SCHEMA),
    "psi": _params(["set", "radii"], set=SET_SCHEMA, radii=_INT_LIST, qs=_PROB_LIST),
    "merge-bound": _params(["set", "t"], set=SET_SCHEMA, t=_POS_INT, radius=_POS_INT,
                           exact={"type": "boolean"}),
    "explore": _params(["set", "t"], set=SET_SCHEMA, t=_POS_INT, radius=_POS_INT,
                       mode={"enum": ["rigorous", "practical"]}, r=_POS_INT, ell=_POS_INT,
                       estimator_samples=_POS_INT, strict={"type": "boolean"}, transcripts=_NONNEG_INT),
    "v-n": _params(["size_s", "n_max", "phi"], size_s=_POS_INT, n_max=_NONNEG_INT, phi=PHI_SCHEMA,
                   c=_POS_NUMBER, c_prime=_POS_NUMBER, d=_POS_INT),
    "collect-mass": _params(["set", "n_max", "phi"], set=SET_SCHEMA, n_max=_NONNEG_INT, phi=PHI_SCHEMA,
                            c=_POS_NUMBER),
    "block-scan": _params(["k", "n_grid", "C"], k=_POS_INT, n_grid=_INT_LIST, C=_POS_INT, d=_POS_INT,
                          n0=_POS_INT),
    "coarse-grain": _params(["k", "n", "C", "window"], k=_POS_INT, n=_POS_INT, C=_POS_INT,
                            window=_POS_INT, d=_POS_INT, n0=_POS_INT),
    "density-scan": _params(["k", "n_grid", "delta"], k=_POS_INT, n_grid=_INT_LIST,
                            delta={"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                            d=_POS_INT),
    "slab-crossing": _params(["ell", "lengths"], d=_POS_INT, ell=_POS_INT, lengths=_INT_LIST),
    "half-space": _params(["n"], d=_POS_INT, n=_POS_INT, c0=_PROB, half_space={"type": "boolean"}),
    "cutset-tail": _params(["set", "n_grid", "radius"], set=SET_SCHEMA, n_grid=_NONNEG_INT_LIST,
                           radius=_POS_INT),
    "crossing-sweep": _params(["side", "ps"], side=_POS_INT, ps=_PROB_LIST, d=_POS_INT),
    "sprinkling-check": _params(["source_radius", "target_radius"], source_radius=_NONNEG_INT,
                                target_radius=_POS_INT, eta=_PROB),
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment"],
    "properties": {
        "fast": {"type": "boolean"},
        "graph": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(GRAPH_KINDS)},
                "d": _POS_INT,
                "side": _POS_INT,
                "thickness": _POS_INT,
                "window": {"type": "array", "items": _POS_INT, "minItems": 2, "maxItems": 2},
                "degree": _POS_INT,
                "depth": _NONNEG_INT,
                "path": {"type": "string"},
            },
        },
        "percolation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p": _PROB,
                "q": _PROB,
                "eps": _PROB,
                "seed": _NONNEG_INT,
                "samples": _POS_INT,
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"type": "string"},
                "params": {"type": "object"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {
                    "type": "array",
                    "items": {"enum": ["csv", "json"]},
                    "uniqueItems": True,
                    "minItems": 1,
                },
            },
        },
    },
}


def _check(instance: Any, schema: dict, where: str) -> None:
    try:
        jsonschema.validate(instance=instance, schema=schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"{where}{'/' + path if path else ''}: {exc.message}") from exc


@dataclass
class ExperimentConfig:
    """
    Validated experiment configuration.

    Only the fields that determine the outputs enter :attr:`config_hash`; the
    output directory does not, so a replay into another directory hashes the same.
    """

    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    graph: Optional[Dict[str, Any]] = None
    percolation: Dict[str, Any] = field(default_factory=dict)
    directory: str = DEFAULT_OUT_DIR
    formats: List[str] = field(default_factory=lambda: ["csv", "json"])
    fast: bool = False

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("A config must be a mapping with graph/percolation/experiment/output sections.")
        _check(data, CONFIG_SCHEMA, "config")
        kind = data["experiment"]["kind"]
        if kind not in PARAM_SCHEMAS:
            raise ConfigError(f"Unknown experiment '{kind}'. Known: {', '.join(sorted(PARAM_SCHEMAS))}.")
        params = copy.deepcopy(data["experiment"].get("params", {}))
        _check(params, PARAM_SCHEMAS[kind], f"experiment.params[{kind}]")
        output = data.get("output", {})
        return cls(
            kind=kind,
            params=params,
            graph=copy.deepcopy(data.get("graph")),
            percolation=dict(data.get("percolation", {})),
            directory=output.get("directory", DEFAULT_OUT_DIR),
            formats=list(output.get("formats", ["csv", "json"])),
            fast=bool(data.get("fast", False)),
        )

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "experiment": {"kind": self.kind, "params": copy.deepcopy(self.params)},
            "percolation": dict(self.percolation),
            "output": {"directory": self.directory, "formats": list(self.formats)},
            "fast": self.fast,
        }
        if self.graph is not None:
            out["graph"] = copy.deepcopy(self.graph)
        return out

    def hashed_dict(self) -> Dict[str, Any]:
        out = self.to_dict()
        out["output"].pop("directory")
        return out

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @property
    def seed(self) -> int:
        return int(self.percolation.get("seed", 0))

    def samples(self, default: int = 1000) -> int:
        n = int(self.params.get("samples", self.percolation.get("samples", default)))
        return max(1, n // 10) if self.fast else n

    def grid(self, values: List[int]) -> List[int]:
        """Parameter grid, thinned to every other point under ``fast``."""
        values = list(values)
        if self.fast and len(values) > 2:
            return values[::2]
        return values

    def prob(self, name: str) -> float:
        if name not in self.percolation:
            raise ConfigError(f"Experiment '{self.kind}' needs percolation.{name}.")
        return float(self.percolation[name])

    def graph_spec(self) -> GraphSpec:
        if self.graph is None:
            raise ConfigError(f"Experiment '{self.kind}' needs a graph section.")
        g = dict(self.graph)
        if "window" in g:
            g["window"] = tuple(g["window"])
        return GraphSpec(**g)

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None,
                       fast: Optional[bool] = None) -> "ExperimentConfig":
        cfg = copy.deepcopy(self)
        if seed is not None:
            cfg.percolation["seed"] = int(seed)
        if out is not None:
            cfg.directory = out
        if fast is not None:
            cfg.fast = bool(fast) or cfg.fast
        return cfg


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a YAML experiment config."""
    if not os.path.isfile(path):
        raise ConfigError(f"Config file '{path}' does not exist.")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"Config file '{path}' is not valid YAML: {exc}") from exc
    cfg = ExperimentConfig.from_dict(data)
    if cfg.graph is not None and cfg.graph.get("path") and not os.path.isabs(cfg.graph["path"]):
        cfg.graph["path"] = os.path.join(os.path.dirname(os.path.abspath(path)), cfg.graph["path"])
    logging.debug("Loaded config %s (hash %s)", path, cfg.config_hash[:12])
    return cfg
