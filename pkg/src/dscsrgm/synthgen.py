"""Synthetic defect-discovery series drawn from traditional SRGMs.

Each series: pick a generator kind uniformly, sample its parameters, evaluate
m(1..L) until the curve reaches ``termination_fraction * a`` (or
``max_length``), scale by ``1 + eps`` with Gaussian ``eps`` and finally force
the values to be non-negative and non-decreasing.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import DefectSeries, Source, from_counts, save_series
from .errors import GenerationStalled, TooShort
from .srgm import GENERATOR_KINDS, ModelKind, SrgmSpec, mean_value


@dataclass(frozen=True)
class SynthConfig:
    count_n: int = 59
    a_fixed: float = 100.0
    b_log_uniform_range: tuple = (0.0001, 1.0)
    r_uniform_range: tuple = (0.0001, 1.0)
    c_uniform_range: tuple = (0.01, 2.0)
    termination_fraction: float = 0.95
    max_length: int = 512
    noise_sd: float = 0.001
    min_length: int = 9
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "b_log_uniform_range", tuple(self.b_log_uniform_range))
        object.__setattr__(self, "r_uniform_range", tuple(self.r_uniform_range))
        object.__setattr__(self, "c_uniform_range", tuple(self.c_uniform_range))
        if self.count_n < 0:
            raise ValueError("count_n must be >= 0")
        if not 0 < self.termination_fraction <= 1:
            raise ValueError("termination_fraction must lie in (0, 1]")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.min_length < 2 or self.max_length < self.min_length:
            raise ValueError("need 2 <= min_length <= max_length")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("b_log_uniform_range", "r_uniform_range", "c_uniform_range"):
            d[k] = list(d[k])
        return d


def _open_low(rng: np.random.Generator, lo: float, hi: float) -> float:
    # uniform on (lo, hi]
    return hi - rng.random() * (hi - lo)


def sample_spec(config: SynthConfig, rng: np.random.Generator) -> SrgmSpec:
    kind = GENERATOR_KINDS[int(rng.integers(len(GENERATOR_KINDS)))]
    lo, hi = config.b_log_uniform_range
    b = 10.0 ** _open_low(rng, math.log10(lo), math.log10(hi))
    extra = None
    if kind is ModelKind.ISS:
        extra = _open_low(rng, *config.r_uniform_range)
    elif kind is ModelKind.GG:
        extra = _open_low(rng, *config.c_uniform_range)
    return SrgmSpec(kind, config.a_fixed, b, extra)


def generate_trend(spec: SrgmSpec, config: SynthConfig) -> np.ndarray:
    """Noiseless m(1..L), L = first t with m(t) >= fraction * a, capped."""
    if spec.kind not in GENERATOR_KINDS:
        raise ValueError(f"{spec.kind.value} is not a generator kind")
    t = np.arange(1, config.max_length + 1, dtype=np.float64)
    m = mean_value(spec, t)
    hit = np.flatnonzero(m >= config.termination_fraction * spec.a)
    length = int(hit[0]) + 1 if hit.size else config.max_length
    if length < config.min_length:
        raise TooShort(f"trend reaches the threshold after {length} steps")
    return m[:length]


def apply_noise(trend, config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    trend = np.asarray(trend, dtype=np.float64)
    eps = rng.normal(0.0, config.noise_sd, size=trend.shape)
    return trend * (1.0 + eps)


def enforce_cumulative(noisy) -> np.ndarray:
    """Running maximum of max(0, x): non-negative and non-decreasing."""
    return np.maximum.accumulate(np.maximum(np.asarray(noisy, dtype=np.float64), 0.0))


def series_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def generate_one(config: SynthConfig, index: int, prefix: str = "syn") -> DefectSeries:
    rng = series_rng(config.seed, index)
    budget = 1000 * max(config.count_n, 1)
    for _ in range(budget):
        spec = sample_spec(config, rng)
        try:
            trend = generate_trend(spec, config)
        except TooShort:
            continue
        counts = enforce_cumulative(apply_noise(trend, config, rng))
        return from_counts(f"{prefix}-{index:04d}", counts, Source.SYNTHETIC, spec)
    raise GenerationStalled(f"series {index}: {budget} consecutive draws were too short")


def generate_pool(config: SynthConfig, prefix: str = "syn") -> list[DefectSeries]:
    return [generate_one(config, i, prefix) for i in range(config.count_n)]


def write_pool(pool: list[DefectSeries], config: SynthConfig, out_dir) -> Path:
    """Write one CSV per series plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for s in pool:
        save_series(s, out_dir / f"{s.id}.csv")
    manifest = pool_manifest(pool, config)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return out_dir / "manifest.json"


def pool_manifest(pool: list[DefectSeries], config: SynthConfig) -> dict:
    return {
        "config": config.to_dict(),
        "seed": config.seed,
        "series": [
            {"id": s.id, "length": len(s), "generator": s.generator.to_dict()}
            for s in pool
        ],
    }


def with_overrides(config: SynthConfig, **kw) -> SynthConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
