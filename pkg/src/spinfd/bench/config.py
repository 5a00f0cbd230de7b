"""Experiment configuration: schema-versioned JSON with validation and hashing."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Any, Optional

from ..estimators import EstimatorConfig, NoiseModel

__all__ = ["ConfigError", "EXPERIMENTS", "ExperimentConfig", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1
EXPERIMENTS = ("GradAccuracy", "TheoremBound", "TrajOpt", "StepSizeSweep", "Timing",
               "QuasiNewton")
TIMING_MODES = ("off", "sidecar", "inline")


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration (CLI exit code 2)."""


def _seeds(spec) -> list:
    if isinstance(spec, dict):
        start, count = int(spec.get("start", 0)), int(spec["count"])
        return list(range(start, start + count))
    if isinstance(spec, int):
        return list(range(spec))
    return [int(s) for s in spec]


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: what to run, with which estimators, seeds and budgets.

    ``target`` selects an environment (``{"name": "car", ...overrides}``) or
    an objective (``{"name": "quadratic", "dim": 8}``). ``params`` holds
    experiment-specific knobs (see :mod:`spinfd.bench.runner`).
    """

    experiment: str
    estimators: tuple
    seeds: tuple
    target: dict = field(default_factory=dict)
    noise: dict = field(default_factory=lambda: {"kind": "none"})
    delta: Optional[float] = None
    deltas: tuple = ()
    budget: int = 50
    params: dict = field(default_factory=dict)
    timing: str = "off"
    output: Optional[str] = None
    name: str = ""
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; one of {EXPERIMENTS}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        if self.timing not in TIMING_MODES:
            raise ConfigError(f"timing must be one of {TIMING_MODES}")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        try:
            for e in self.estimators:
                EstimatorConfig.from_dict(e)
            NoiseModel.from_dict(self.noise)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid estimator or noise spec: {exc}") from exc
        grid = self.deltas if self.experiment == "StepSizeSweep" else (self.delta,)
        if not grid or any(d is None or not d > 0 for d in grid):
            raise ConfigError("delta (or the deltas grid for StepSizeSweep) must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "experiment" not in d or "estimators" not in d or "seeds" not in d:
            raise ConfigError("config needs 'experiment', 'estimators' and 'seeds'")
        try:
            d["seeds"] = tuple(_seeds(d["seeds"]))
            d["estimators"] = tuple(
                EstimatorConfig.from_dict(e).to_dict() for e in d["estimators"])
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid seeds or estimators: {exc}") from exc
        if "deltas" in d:
            d["deltas"] = tuple(float(v) for v in d["deltas"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        d["seeds"] = list(self.seeds)
        d["deltas"] = list(self.deltas)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        if not offset:
            return self
        return replace(self, seeds=tuple(s + offset for s in self.seeds))

    @cached_property
    def config_hash(self) -> str:
        """Short SHA-256 of the canonical JSON, excluding the output path."""
        d = self.to_dict()
        d.pop("output", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def estimator_configs(self) -> list:
        return [EstimatorConfig.from_dict(e) for e in self.estimators]

    def noise_model(self, seed: int) -> Optional[NoiseModel]:
        spec = dict(self.noise)
        if spec.get("kind", "none") == "none":
            return None
        spec["rng_seed"] = seed
        return NoiseModel.from_dict(spec)

    @property
    def noise_sigma(self) -> float:
        return float(self.noise.get("sigma", self.noise.get("delta_inf", 0.0)) or 0.0)


def _jsonable(obj: Any):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")
