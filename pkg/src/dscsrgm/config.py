"""Experiment configuration and TOML/JSON loading."""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .forecaster import TrainConfig
from .srgm import FitConfig
from .synthgen import SynthConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# variants that train the forecaster, mapped to their candidate pool
POOL_MODES = {"DSC": "SyntheticOnly", "DC": "RealOnly", "Hybrid": "Hybrid"}
VARIANTS = ("DSC", "DC", "Hybrid", "BestSRGM", "Naive")


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_dir: Optional[str] = None
    variants: tuple = ("DSC", "BestSRGM")
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    k: int = 3
    synth_multiplier: int = 1
    seed: int = 0
    output_dir: str = "out"
    wtl_threshold: float = 0.05
    clamp: bool = False
    jobs: int = 0  # worker processes; 0 = every available core

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ConfigError(f"unknown variants {unknown}; choose from {list(VARIANTS)}")
        if len(set(self.variants)) != len(self.variants):
            raise ConfigError("variants must be unique")
        if not 1 <= self.synth_multiplier <= 5:
            raise ConfigError("synth_multiplier must be in 1..5")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.jobs < 0:
            raise ConfigError("jobs must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = list(self.variants)
        d["synth"] = self.synth.to_dict()
        return d

    def provenance(self) -> dict:
        """Everything that influences results (paths and worker count excluded)."""
        d = self.to_dict()
        for k in ("output_dir", "jobs", "corpus_dir"):
            d.pop(k)
        return d


def _sub(cls, data: dict, name: str):
    allowed = {f.name for f in fields(cls)}
    bad = set(data) - allowed
    if bad:
        raise ConfigError(f"[{name}] unknown keys: {sorted(bad)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    kw = {}
    for key, cls in (("synth", SynthConfig), ("train", TrainConfig), ("fit", FitConfig)):
        if key in data:
            kw[key] = _sub(cls, data.pop(key), key)
    allowed = {f.name for f in fields(ExperimentConfig)}
    bad = set(data) - allowed
    if bad:
        raise ConfigError(f"unknown config keys: {sorted(bad)}")
    try:
        return ExperimentConfig(**data, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        if path.suffix.lower() == ".toml":
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    # relative paths are taken relative to the config file
    for key in ("corpus_dir", "output_dir"):
        if data.get(key) and not Path(data[key]).is_absolute():
            data[key] = str((path.parent / data[key]).resolve())
    return config_from_dict(data)
