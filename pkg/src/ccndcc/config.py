"""Scenario files: a versioned JSON document, schema-checked on load."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema

from .core import PopularityLevel, validate_levels
from .store import POLICIES

VERSION = 1
MODES = ("coded", "baseline")
SCENARIOS = ("paper", "fig2a", "fig2b")


class ConfigError(ValueError):
    """Raised for a config that fails the schema or a consistency check."""


_LEVEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["files", "users_per_cache", "degree"],
    "properties": {
        "files": {"type": "integer", "minimum": 1},
        "users_per_cache": {"type": "integer", "minimum": 0},
        "degree": {"type": "integer", "minimum": 1},
    },
}

_LAMBDA = {
    "oneOf": [
        {"type": "number", "minimum": 0},
        {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["version"],
    "properties": {
        "version": {"const": VERSION},
        "name": {"type": "string"},
        "scenario": {"enum": list(SCENARIOS)},
        "topology": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "profile": {"enum": ["paper", "minimal", "custom"]},
                "K": {"type": "integer", "minimum": 1},
                "node_count": {"type": "integer", "minimum": 3},
                "link_capacity": {"type": "integer", "minimum": 0},
                "overrides": {"type": "array", "items": {
                    "type": "array", "prefixItems": [{"type": "integer"}, {"type": "integer"},
                                                     {"type": "integer", "minimum": 0}],
                    "minItems": 3, "maxItems": 3}},
                "edges": {"type": ["array", "null"], "items": {
                    "type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}},
                "kinds": {"type": ["object", "null"], "additionalProperties": {
                    "enum": ["server", "router", "cache", "sink"]}},
            },
        },
        "levels": {"type": "array", "items": _LEVEL, "minItems": 1},
        "files": {"type": "integer", "minimum": 1},
        "chunks": {"type": "integer", "minimum": 1},
        "chunk_bytes": {"type": "integer", "minimum": 0},
        "memory": {"type": "number", "minimum": 0},
        "cs_sizes": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "policies": {"type": "array", "items": {"enum": list(POLICIES)}, "minItems": 1},
        "lambdas": {"type": "array", "items": _LAMBDA, "minItems": 1},
        "modes": {"type": "array", "items": {"enum": list(MODES)}, "minItems": 1, "uniqueItems": True},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "slices": {"type": "integer", "minimum": 1},
        "cooldown": {"type": "integer", "minimum": 0},
        "wait_slices": {"type": "integer", "minimum": 1},
        "recode": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
    },
}


def _default_levels():
    return [{"files": 30, "users_per_cache": 2, "degree": 1},
            {"files": 120, "users_per_cache": 1, "degree": 2}]


@dataclass
class ScenarioConfig:
    """Everything one experiment needs.  Defaults are the 20-node, 4-cache,
    150-file, 12-chunk setup with 30-file caches and 150-packet stores."""

    version: int = VERSION
    name: str = "default"
    scenario: str = "paper"
    topology: dict = field(default_factory=lambda: {
        "profile": "paper", "K": 4, "node_count": 20, "link_capacity": 50,
        "overrides": [], "edges": None, "kinds": None})
    levels: list = field(default_factory=_default_levels)
    files: int = 150
    chunks: int = 12
    chunk_bytes: int = 0
    memory: float = 30
    cs_sizes: list = field(default_factory=lambda: [150])
    policies: list = field(default_factory=lambda: ["priority-lru"])
    lambdas: list = field(default_factory=lambda: [8])
    modes: list = field(default_factory=lambda: list(MODES))
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    slices: int = 60
    cooldown: int = 20
    wait_slices: int = 3
    recode: bool = True
    workers: int = 1

    @property
    def K(self) -> int:
        return self.topology["K"]

    def popularity_levels(self) -> list[PopularityLevel]:
        return [PopularityLevel(i + 1, lv["files"], lv["users_per_cache"], lv["degree"])
                for i, lv in enumerate(self.levels)]

    def lambda_vector(self, lam) -> tuple[float, ...]:
        """A scalar applies to every level; a list gives one mean per level."""
        if isinstance(lam, (int, float)):
            return tuple(float(lam) for _ in self.levels)
        return tuple(float(x) for x in lam)

    def to_dict(self) -> dict:
        return asdict(self)


def _with_topology_defaults(topo: dict) -> dict:
    base = ScenarioConfig().topology
    base.update(topo)
    return base


def _semantic_checks(cfg: ScenarioConfig) -> None:
    levels = cfg.popularity_levels()
    try:
        validate_levels(cfg.K, levels)
    except ValueError as exc:
        raise ConfigError(f"levels: {exc}") from None
    total = sum(lv.files for lv in levels)
    if total != cfg.files:
        raise ConfigError(f"files: levels hold {total} files but files={cfg.files}")
    d_max = max(lv.degree for lv in levels)
    for lv in levels:
        if d_max % lv.degree:
            raise ConfigError(f"levels[{lv.index - 1}].degree: {lv.degree} does not divide d_max={d_max}")
    if cfg.K % d_max:
        raise ConfigError(f"topology.K: {cfg.K} is not a multiple of d_max={d_max}")
    for i, lam in enumerate(cfg.lambdas):
        if not isinstance(lam, (int, float)) and len(lam) != len(levels):
            raise ConfigError(f"lambdas[{i}]: {len(lam)} values for {len(levels)} levels")
    topo = cfg.topology
    if topo["profile"] == "custom" and (not topo.get("edges") or not topo.get("kinds")):
        raise ConfigError("topology: custom profile needs edges and kinds")


def from_dict(data: dict) -> ScenarioConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}")
    kwargs = dict(data)
    if "topology" in kwargs:
        kwargs["topology"] = _with_topology_defaults(kwargs["topology"])
    cfg = ScenarioConfig(**kwargs)
    _semantic_checks(cfg)
    return cfg


def load(path: str | Path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a JSON object")
    return from_dict(data)


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def save(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))


FIELD_NAMES = tuple(f.name for f in fields(ScenarioConfig))
