"""Defect-discovery series: validation, CSV/JSON persistence and the half split.

CSV files carry a ``time,cumulative_defects`` header and one observation per
line.  JSON files hold ``{"id", "source", "points": [[t, c], ...]}`` plus an
optional ``generator`` object describing the SRGM that produced a synthetic
series.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ParseError, TooShort, ValidationError
from .srgm import SrgmSpec

CSV_HEADER = ("time", "cumulative_defects")

# 8-step input window plus one seed target.
MIN_OBSERVED = 9


class Source(str, enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True, eq=False)
class DefectSeries:
    id: str
    times: np.ndarray
    counts: np.ndarray
    source: Source = Source.REAL
    generator: Optional[SrgmSpec] = None

    def __post_init__(self):
        times = np.array(self.times, dtype=np.int64)
        counts = np.array(self.counts, dtype=np.float64)
        if times.ndim != 1 or counts.ndim != 1 or times.shape != counts.shape:
            raise ValidationError(f"{self.id}: times and counts must be 1-d and equally long")
        if len(counts) < 2:
            raise TooShort(f"{self.id}: series needs at least 2 points, got {len(counts)}")
        if not np.all(np.isfinite(counts)):
            raise ValidationError(f"{self.id}: non-finite cumulative count")
        if np.any(times < 0):
            raise ValidationError(f"{self.id}: negative time index")
        if np.any(np.diff(times) <= 0):
            raise ValidationError(f"{self.id}: times must be strictly increasing")
        if np.any(counts < 0):
            raise ValidationError(f"{self.id}: negative cumulative count")
        bad = np.flatnonzero(np.diff(counts) < 0)
        if bad.size:
            i = int(bad[0]) + 1
            raise ValidationError(
                f"{self.id}: cumulative count decreases at position {i} "
                f"({counts[i - 1]!r} -> {counts[i]!r})"
            )
        times.flags.writeable = False
        counts.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "source", Source(self.source))

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, DefectSeries):
            return NotImplemented
        return (
            self.id == other.id
            and self.source == other.source
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.counts, other.counts)
            and self.generator == other.generator
        )

    __hash__ = None

    def slice(self, start: int, stop: Optional[int] = None, suffix: str = "") -> "DefectSeries":
        return DefectSeries(
            id=self.id + suffix,
            times=self.times[start:stop],
            counts=self.counts[start:stop],
            source=self.source,
            generator=self.generator,
        )

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "source": self.source.value,
            "points": [[int(t), float(c)] for t, c in zip(self.times, self.counts)],
        }
        if self.generator is not None:
            d["generator"] = self.generator.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DefectSeries":
        try:
            points = d["points"]
            times = [int(p[0]) for p in points]
            counts = [float(p[1]) for p in points]
            gen = d.get("generator")
            return cls(
                id=str(d["id"]),
                times=times,
                counts=counts,
                source=Source(d.get("source", "real")),
                generator=SrgmSpec.from_dict(gen) if gen else None,
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"malformed series object: {exc}") from exc


@dataclass(frozen=True)
class SplitSeries:
    observed: DefectSeries
    holdout: DefectSeries = field(repr=False)


def _format_from_path(path: Path, fmt: Optional[str]) -> str:
    if fmt:
        fmt = fmt.lower()
    else:
        fmt = path.suffix.lower().lstrip(".")
    if fmt not in ("csv", "json"):
        raise ParseError(f"{path}: unknown series format {fmt!r}")
    return fmt


def _read_csv(path: Path, series_id: str) -> DefectSeries:
    times, counts = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                t = int(row[0])
                c = float(row[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if not math.isfinite(c):
                raise ParseError(f"{path}:{lineno}: non-finite count {row[1]!r}")
            times.append(t)
            counts.append(c)
    if len(counts) < 2:
        raise TooShort(f"{path}: series needs at least 2 points, got {len(counts)}")
    return DefectSeries(id=series_id, times=times, counts=counts)


def load_series(path, format: Optional[str] = None) -> DefectSeries:
    """Read and validate one series; CSV ids come from the file stem."""
    path = Path(path)
    fmt = _format_from_path(path, format)
    if fmt == "csv":
        return _read_csv(path, path.stem)
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: top-level JSON value must be an object")
    return DefectSeries.from_dict(obj)


def save_series(series: DefectSeries, path, format: Optional[str] = None) -> Path:
    path = Path(path)
    fmt = _format_from_path(path, format)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for t, c in zip(series.times, series.counts):
                # repr round-trips float64 exactly
                w.writerow([int(t), repr(float(c))])
    else:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(series.to_dict(), fh, indent=1)
            fh.write("\n")
    return path


def load_corpus(directory) -> list[DefectSeries]:
    """Load every ``*.csv`` / ``*.json`` series in a directory, sorted by id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ParseError(f"{directory}: not a directory")
    out = []
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in (".csv", ".json") and p.name != "manifest.json":
            out.append(load_series(p))
    ids = [s.id for s in out]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{directory}: duplicate series ids")
    return sorted(out, key=lambda s: s.id)


def split_half(series: DefectSeries, min_observed: int = MIN_OBSERVED) -> SplitSeries:
    n = len(series)
    n_obs = math.ceil(n / 2)
    if n_obs < min_observed or n - n_obs < 1:
        raise TooShort(
            f"{series.id}: observed half would have {n_obs} points, need >= {min_observed}"
        )
    return SplitSeries(observed=series.slice(0, n_obs), holdout=series.slice(n_obs))


def from_counts(series_id: str, counts: Sequence[float], source=Source.REAL,
                generator: Optional[SrgmSpec] = None, start: int = 1) -> DefectSeries:
    return DefectSeries(
        id=series_id,
        times=np.arange(start, start + len(counts)),
        counts=counts,
        source=source,
        generator=generator,
    )
