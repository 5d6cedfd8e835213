"""Mean-value functions of six growth models and least-squares fitting.

Parameters are fitted in an unconstrained space (log for positive
parameters, logit for those confined to (0, 1)) so every iterate is a valid
model.  Each kind is fitted from a fixed set of scrambled Sobol starts and
the lowest-MSE converged solution wins.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit, logit
from scipy.stats import qmc

from .errors import AllFitsFailed, DomainError


class ModelKind(str, enum.Enum):
    GO = "GO"
    YDSS = "YDSS"
    ISS = "ISS"
    GG = "GG"
    LOGISTIC = "Logistic"
    GOMPERTZ = "Gompertz"


ALL_KINDS = tuple(ModelKind)
GENERATOR_KINDS = (ModelKind.GO, ModelKind.YDSS, ModelKind.ISS, ModelKind.GG)

# name of the third parameter, if any
_EXTRA_NAME = {
    ModelKind.GO: None,
    ModelKind.YDSS: None,
    ModelKind.ISS: "r",
    ModelKind.GG: "c",
    ModelKind.LOGISTIC: "c",
    ModelKind.GOMPERTZ: "c",
}


@dataclass(frozen=True)
class SrgmSpec:
    kind: ModelKind
    a: float
    b: float
    extra: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))

    @property
    def n_params(self) -> int:
        return 2 if _EXTRA_NAME[self.kind] is None else 3

    @property
    def params(self) -> tuple:
        return (self.a, self.b) if self.extra is None else (self.a, self.b, self.extra)

    def check(self, sampling: bool = False) -> None:
        """Raise DomainError unless the parameters are admissible.

        ``sampling=True`` applies the tighter generator ranges (b < 1, r < 1).
        """
        k, a, b, x = self.kind, self.a, self.b, self.extra
        vals = [a, b] + ([] if x is None else [x])
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"{k.value}: non-finite parameter in {self.params}")
        need_extra = _EXTRA_NAME[k] is not None
        if need_extra != (x is not None):
            raise DomainError(f"{k.value}: expected {3 if need_extra else 2} parameters")
        if a <= 0:
            raise DomainError(f"{k.value}: a must be > 0, got {a}")
        if k is ModelKind.GOMPERTZ:
            if not (0 < b < 1 and 0 < x < 1):
                raise DomainError(f"Gompertz needs 0 < b < 1 and 0 < c < 1, got b={b}, c={x}")
            return
        if b <= 0 or (sampling and b >= 1 and k in GENERATOR_KINDS):
            raise DomainError(f"{k.value}: b out of range, got {b}")
        if k is ModelKind.ISS and not 0 < x <= 1:
            raise DomainError(f"ISS needs 0 < r <= 1, got {x}")
        if k in (ModelKind.GG, ModelKind.LOGISTIC) and x <= 0:
            raise DomainError(f"{k.value}: c must be > 0, got {x}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "a": self.a, "b": self.b}
        name = _EXTRA_NAME[self.kind]
        if name is not None:
            d[name] = self.extra
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SrgmSpec":
        kind = ModelKind(d["kind"])
        name = _EXTRA_NAME[kind]
        extra = None if name is None else float(d[name])
        return cls(kind, float(d["a"]), float(d["b"]), extra)


def _curve(kind: ModelKind, a, b, x, t):
    if kind is ModelKind.GO:
        return -a * np.expm1(-b * t)
    if kind is ModelKind.YDSS:
        return a * (1.0 - (1.0 + b * t) * np.exp(-b * t))
    if kind is ModelKind.ISS:
        e = np.exp(-b * t)
        return a * (-np.expm1(-b * t)) / (1.0 + (1.0 - x) / x * e)
    if kind is ModelKind.GG:
        return a * (-np.expm1(-b * t)) ** x
    if kind is ModelKind.LOGISTIC:
        return a / (1.0 + x * np.exp(-b * t))
    if kind is ModelKind.GOMPERTZ:
        return a * np.exp(np.log(b) * x ** t)
    raise DomainError(f"unknown model kind {kind!r}")


def mean_value(spec: SrgmSpec, t):
    """Expected cumulative defects m(t); ``t`` may be a scalar or an array."""
    spec.check()
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise DomainError("t must be non-negative")
    out = _curve(spec.kind, spec.a, spec.b, spec.extra, t_arr)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- fitting


@dataclass(frozen=True)
class FitConfig:
    n_starts: int = 16
    seed: int = 20240917
    ftol: float = 1e-10
    max_iter: int = 500
    # MSEs within tie_rtol * mean(y^2) of the best are ties, broken by kind order
    tie_rtol: float = 1e-9


@dataclass(frozen=True)
class FitResult:
    kind: ModelKind
    spec: Optional[SrgmSpec]
    mse: float
    converged: bool
    n_converged_starts: int = field(default=0, compare=False)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "parameters": None if self.spec is None else self.spec.to_dict(),
            "mse": self.mse if math.isfinite(self.mse) else None,
            "converged": self.converged,
        }


def _transforms(kind: ModelKind):
    """(forward, inverse) pairs mapping natural parameters to the real line."""
    log = (np.log, np.exp)
    lgt = (logit, expit)
    if kind is ModelKind.GOMPERTZ:
        return [log, lgt, lgt]
    if kind is ModelKind.ISS:
        return [log, log, lgt]
    if kind in (ModelKind.GG, ModelKind.LOGISTIC):
        return [log, log, log]
    return [log, log]


def _start_box(kind: ModelKind, t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bounds of the start region, in natural parameter units."""
    ymax = float(y.max()) if y.max() > 0 else 1.0
    tmax = float(t.max()) if t.max() > 0 else 1.0
    a = (ymax, 10.0 * ymax)
    b = (0.01 / tmax, 2.0)
    if kind is ModelKind.GOMPERTZ:
        return np.array([a, (1e-5, 0.9), (0.3, 0.999)])
    if kind is ModelKind.ISS:
        return np.array([a, b, (1e-4, 0.98)])
    if kind is ModelKind.GG:
        return np.array([a, b, (0.1, 5.0)])
    if kind is ModelKind.LOGISTIC:
        return np.array([a, b, (1.0, 1e4)])
    return np.array([a, b])


def _starts(kind: ModelKind, t, y, cfg: FitConfig) -> np.ndarray:
    box = _start_box(kind, t, y)
    tf = _transforms(kind)
    lo = np.array([f(v) for (f, _), v in zip(tf, box[:, 0])])
    hi = np.array([f(v) for (f, _), v in zip(tf, box[:, 1])])
    sampler = qmc.Sobol(d=len(tf), scramble=True, seed=cfg.seed)
    u = sampler.random(cfg.n_starts)
    return lo + u * (hi - lo)


def _natural(kind: ModelKind, z):
    return [inv(v) for (_, inv), v in zip(_transforms(kind), z)]


def fit(prefix, kind, config: FitConfig = FitConfig()) -> FitResult:
    """Least-squares fit of one model kind to an observed prefix.

    ``prefix`` is anything with ``times`` and ``counts``.  Failure never
    raises; it is reported as ``converged=False`` with infinite MSE.
    """
    kind = ModelKind(kind)
    t = np.asarray(prefix.times, dtype=np.float64)
    y = np.asarray(prefix.counts, dtype=np.float64)
    n_par = 2 if _EXTRA_NAME[kind] is None else 3
    failed = FitResult(kind, None, math.inf, False)
    if len(y) < n_par + 1:
        return failed
    if np.ptp(y) == 0:
        # no growth: parameters are not identifiable
        return failed

    def residuals(z):
        p = _natural(kind, np.clip(z, -60.0, 60.0))
        x = p[2] if n_par == 3 else None
        with np.errstate(all="ignore"):
            r = _curve(kind, p[0], p[1], x, t) - y
        return np.nan_to_num(r, nan=1e100, posinf=1e100, neginf=-1e100)

    best_mse, best_z, n_ok = math.inf, None, 0
    for z0 in _starts(kind, t, y, config):
        try:
            with warnings.catch_warnings(), np.errstate(all="ignore"):
                warnings.simplefilter("ignore")
                res = least_squares(
                    residuals, z0, method="lm",
                    ftol=config.ftol, xtol=config.ftol, gtol=1e-15,
                    max_nfev=config.max_iter * (n_par + 1),
                )
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            continue
        if res.status <= 0 or not np.all(np.isfinite(res.x)):
            continue
        r = residuals(res.x)
        if np.any(np.abs(r) >= 1e99):
            continue
        mse = float(np.mean(r * r))
        if not math.isfinite(mse):
            continue
        n_ok += 1
        if mse < best_mse:
            best_mse, best_z = mse, res.x
    if best_z is None:
        return failed
    p = _natural(kind, np.clip(best_z, -60.0, 60.0))
    spec = SrgmSpec(kind, float(p[0]), float(p[1]), float(p[2]) if n_par == 3 else None)
    try:
        spec.check()
    except DomainError:
        return failed
    return FitResult(kind, spec, best_mse, True, n_ok)


def fit_all(prefix, config: FitConfig = FitConfig()) -> dict:
    return {k: fit(prefix, k, config) for k in ALL_KINDS}


def pick_best(fits: dict, prefix, config: FitConfig = FitConfig()) -> FitResult:
    ok = [fits[k] for k in ALL_KINDS if k in fits and fits[k].converged]
    if not ok:
        raise AllFitsFailed("every model kind failed to fit")
    y = np.asarray(prefix.counts, dtype=np.float64)
    tol = config.tie_rtol * max(float(np.mean(y * y)), 1e-300)
    best = min(r.mse for r in ok)
    return next(r for r in ok if r.mse <= best + tol)


def select_best(prefix, config: FitConfig = FitConfig()) -> tuple:
    """Fit all six kinds and return ``(kind, FitResult)`` for the lowest MSE."""
    best = pick_best(fit_all(prefix, config), prefix, config)
    return best.kind, best
