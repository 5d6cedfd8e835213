"""Stacked LSTM one-step forecaster with recursive multi-step prediction.

The network is written directly in numpy (forward pass, backpropagation
through time and Adam updates) so that training is reproducible bit for bit
given a seed.  Every training window is min-max scaled with the statistics
of its own input values; the target uses the same scaler and may therefore
exceed 1.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import NoTrainingData, NonFiniteLoss

CHECKPOINT_FORMAT = "dscsrgm-forecaster"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    window: int = 8
    layers: int = 4
    hidden: int = 128
    dropout: float = 0.2
    epochs: int = 300
    batch: int = 64
    split_ratio: float = 0.8
    seed: int = 0
    learn_rate: float = 1e-3
    dtype: str = "float32"

    def __post_init__(self):
        if self.window < 1 or self.layers < 1 or self.hidden < 1:
            raise ValueError("window, layers and hidden must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be positive")
        if not 0 < self.split_ratio <= 1:
            raise ValueError("split_ratio must lie in (0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- windows


def scale_window(w):
    """Return (scaled, lo, span); a flat window gets span 1 so it maps to zeros."""
    w = np.asarray(w, dtype=np.float64)
    lo = w.min(axis=-1, keepdims=True)
    span = w.max(axis=-1, keepdims=True) - lo
    span = np.where(span > 0, span, 1.0)
    return (w - lo) / span, lo, span


def unscale(value, lo, span):
    return lo + value * span


@dataclass(frozen=True)
class WindowSet:
    inputs: np.ndarray   # (N, window) scaled to [0, 1]
    targets: np.ndarray  # (N,) scaled with the input window's scaler
    mins: np.ndarray
    maxs: np.ndarray
    series_ids: tuple = ()

    def __len__(self):
        return len(self.targets)


def windows_from_counts(counts, window: int):
    """All length-(window + 1) slices of one series, scaled per slice."""
    counts = np.asarray(counts, dtype=np.float64)
    n = len(counts) - window
    if n < 1:
        return np.empty((0, window)), np.empty(0), np.empty(0), np.empty(0)
    slices = np.lib.stride_tricks.sliding_window_view(counts, window + 1)
    raw_in, raw_out = slices[:, :window], slices[:, window]
    x, lo, span = scale_window(raw_in)
    y = (raw_out - lo[:, 0]) / span[:, 0]
    return x, y, lo[:, 0], raw_in.max(axis=1)


def _stack(parts, ids, window: int) -> WindowSet:
    if not parts:
        return WindowSet(np.empty((0, window)), np.empty(0), np.empty(0), np.empty(0), ())
    return WindowSet(
        inputs=np.concatenate([p[0] for p in parts]),
        targets=np.concatenate([p[1] for p in parts]),
        mins=np.concatenate([p[2] for p in parts]),
        maxs=np.concatenate([p[3] for p in parts]),
        series_ids=tuple(ids),
    )


def split_series(series_set, config: TrainConfig, rng: np.random.Generator):
    """Random train/validation partition at the series level."""
    usable = [s for s in series_set if len(s.counts) >= config.window + 1]
    if not usable:
        raise NoTrainingData(
            f"no series has the {config.window + 1} points needed for one window"
        )
    n = len(usable)
    n_val = int(round(n * (1.0 - config.split_ratio)))
    if n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    else:
        n_val = 0
    order = rng.permutation(n)
    val = [usable[i] for i in sorted(order[:n_val])]
    train = [usable[i] for i in sorted(order[n_val:])]
    return train, val


def make_windows(series_set, config: TrainConfig, rng: np.random.Generator):
    """Split series 80:20, then cut each into scaled sliding windows."""
    train, val = split_series(series_set, config, rng)
    out = []
    for group in (train, val):
        parts = [windows_from_counts(s.counts, config.window) for s in group]
        out.append(_stack(parts, [s.id for s in group], config.window))
    return out[0], out[1]


# ---------------------------------------------------------------- network


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


class StackedLSTM:
    """LSTM layers -> last hidden state -> linear head (one output)."""

    def __init__(self, params: dict, layers: int, hidden: int, dropout: float = 0.0):
        self.params = params
        self.layers = layers
        self.hidden = hidden
        self.dropout = dropout

    @classmethod
    def initialise(cls, config: TrainConfig, rng: np.random.Generator, n_in: int = 1):
        H = config.hidden
        dt = np.dtype(config.dtype)
        bound = 1.0 / math.sqrt(H)
        params = {}
        for layer in range(config.layers):
            fan = n_in if layer == 0 else H
            params[f"Wx{layer}"] = rng.uniform(-bound, bound, (fan, 4 * H)).astype(dt)
            params[f"Wh{layer}"] = rng.uniform(-bound, bound, (H, 4 * H)).astype(dt)
            b = np.zeros(4 * H, dtype=dt)
            b[H:2 * H] = 1.0  # forget gate
            params[f"b{layer}"] = b
        params["Wy"] = rng.uniform(-bound, bound, (H, 1)).astype(dt)
        params["by"] = np.zeros(1, dtype=dt)
        return cls(params, config.layers, H, config.dropout)

    @property
    def dtype(self):
        return self.params["Wy"].dtype

    def forward(self, X, train: bool = False, rng: Optional[np.random.Generator] = None):
        """X: (B, T) or (B, T, F).  Returns (predictions (B,), cache).

        Sequences are processed time-major internally.
        """
        X = np.asarray(X, dtype=self.dtype)
        if X.ndim == 2:
            X = X[:, :, None]
        B, T, _ = X.shape
        H = self.hidden
        inp = np.ascontiguousarray(X.transpose(1, 0, 2))
        cache = []
        for layer in range(self.layers):
            Wx, Wh, b = (self.params[f"{p}{layer}"] for p in ("Wx", "Wh", "b"))
            xw = inp @ Wx + b
            hs = np.zeros((T + 1, B, H), dtype=self.dtype)
            cs = np.zeros((T + 1, B, H), dtype=self.dtype)
            gates = np.empty((T, B, 4 * H), dtype=self.dtype)
            for t in range(T):
                z = xw[t] + hs[t] @ Wh
                g = gates[t]
                g[:] = _sigmoid(z)
                g[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
                cs[t + 1] = g[:, H:2 * H] * cs[t] + g[:, :H] * g[:, 2 * H:3 * H]
                hs[t + 1] = g[:, 3 * H:] * np.tanh(cs[t + 1])
            out = hs[1:]
            mask = None
            if train and self.dropout > 0 and layer < self.layers - 1:
                keep = 1.0 - self.dropout
                mask = (rng.random(out.shape) < keep).astype(self.dtype) / self.dtype.type(keep)
                out = out * mask
            cache.append((inp, hs, cs, gates, mask))
            inp = out
        h_last = inp[-1]
        yhat = (h_last @ self.params["Wy"] + self.params["by"])[:, 0]
        return yhat, (cache, h_last)

    def backward(self, cache, dyhat) -> dict:
        layer_cache, h_last = cache
        H = self.hidden
        grads = {}
        dyhat = np.asarray(dyhat, dtype=self.dtype)[:, None]
        grads["Wy"] = h_last.T @ dyhat
        grads["by"] = dyhat.sum(axis=0)
        T, B = layer_cache[-1][0].shape[:2]
        d_out = np.zeros((T, B, H), dtype=self.dtype)
        d_out[-1] = dyhat @ self.params["Wy"].T
        for layer in reversed(range(self.layers)):
            inp, hs, cs, gates, _ = layer_cache[layer]
            Wx, Wh = self.params[f"Wx{layer}"], self.params[f"Wh{layer}"]
            dz_all = np.empty((T, B, 4 * H), dtype=self.dtype)
            dh_next = np.zeros((B, H), dtype=self.dtype)
            dc_next = np.zeros((B, H), dtype=self.dtype)
            for t in reversed(range(T)):
                g = gates[t]
                i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
                tc = np.tanh(cs[t + 1])
                dh = d_out[t] + dh_next
                dc = dc_next + dh * o * (1.0 - tc * tc)
                dz = dz_all[t]
                dz[:, :H] = dc * gg * i * (1.0 - i)
                dz[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
                dz[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
                dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
                dc_next = dc * f
                dh_next = dz @ Wh.T
            flat_dz = dz_all.reshape(T * B, 4 * H)
            grads[f"Wx{layer}"] = inp.reshape(T * B, -1).T @ flat_dz
            grads[f"Wh{layer}"] = hs[:-1].reshape(T * B, H).T @ flat_dz
            grads[f"b{layer}"] = flat_dz.sum(axis=0)
            if layer > 0:
                d_out = dz_all @ Wx.T
                mask = layer_cache[layer - 1][4]
                if mask is not None:
                    d_out = d_out * mask
        return grads

    def loss_and_grads(self, X, y, train: bool = False, rng=None):
        yhat, cache = self.forward(X, train=train, rng=rng)
        y = np.asarray(y, dtype=self.dtype)
        err = yhat - y
        loss = float(np.mean(err.astype(np.float64) ** 2))
        grads = self.backward(cache, 2.0 * err / len(err))
        return loss, grads

    def predict(self, X, batch: int = 4096) -> np.ndarray:
        X = np.asarray(X)
        out = [self.forward(X[i:i + batch])[0] for i in range(0, len(X), batch)]
        return np.concatenate(out).astype(np.float64) if out else np.empty(0)

    def mse(self, X, y) -> float:
        if len(y) == 0:
            return math.nan
        return float(np.mean((self.predict(X) - np.asarray(y, dtype=np.float64)) ** 2))


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


# ---------------------------------------------------------------- training


@dataclass
class ForecastModel:
    net: StackedLSTM
    config: TrainConfig
    best_val_loss: float
    epoch_of_best: int
    # "validation", or "training" when no series could be held out
    checkpoint_metric: str = "validation"
    train_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)

    def predict_scaled(self, X) -> np.ndarray:
        return self.net.predict(X)


def train(samples, config: TrainConfig) -> ForecastModel:
    """Fit the network with Adam on MSE, keeping the best-validation weights.

    ``samples`` is the ``(train, val)`` pair from :func:`make_windows`.
    """
    train_set, val_set = samples
    if len(train_set) == 0:
        raise NoTrainingData("empty training set")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    net = StackedLSTM.initialise(config, rng)
    opt = Adam(net.params, config.learn_rate)
    dt = net.dtype
    Xtr = train_set.inputs.astype(dt)
    ytr = train_set.targets.astype(dt)
    if len(val_set):
        Xv, yv, metric = val_set.inputs, val_set.targets, "validation"
    else:
        Xv, yv, metric = train_set.inputs, train_set.targets, "training"

    best_loss, best_epoch, best_params = math.inf, -1, None
    train_hist, val_hist = [], []
    n = len(ytr)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch):
            idx = order[start:start + config.batch]
            loss, grads = net.loss_and_grads(Xtr[idx], ytr[idx], train=True, rng=rng)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(
                    f"non-finite loss/gradient at epoch {epoch}, batch offset {start} "
                    f"(loss={loss}, lr={config.learn_rate})"
                )
            opt.step(net.params, grads)
            total += loss * len(idx)
        train_hist.append(total / n)
        v = net.mse(Xv, yv)
        if not math.isfinite(v):
            raise NonFiniteLoss(f"non-finite {metric} loss at epoch {epoch}")
        val_hist.append(v)
        if v < best_loss:
            best_loss, best_epoch = v, epoch
            best_params = {k: p.copy() for k, p in net.params.items()}
    best_net = StackedLSTM(best_params, config.layers, config.hidden, config.dropout)
    return ForecastModel(best_net, config, best_loss, best_epoch, metric, train_hist, val_hist)


def fit_forecaster(series_set, config: TrainConfig) -> ForecastModel:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    return train(make_windows(series_set, config, rng), config)


def forecast(model: ForecastModel, observed, horizon: int, clamp: bool = False) -> np.ndarray:
    """Recursive forecast: predict one step, append it, slide the window.

    ``clamp`` keeps each prediction at or above the last window value; it is
    off by default.
    """
    W = model.config.window
    counts = np.asarray(getattr(observed, "counts", observed), dtype=np.float64)
    if len(counts) < W:
        raise ValueError(f"need at least {W} observed values, got {len(counts)}")
    window = list(counts[-W:])
    out = np.empty(horizon)
    for h in range(horizon):
        w = np.array(window[-W:])
        x, lo, span = scale_window(w)
        y = unscale(float(model.predict_scaled(x[None, :])[0]), float(lo[0]), float(span[0]))
        if clamp:
            y = max(y, w[-1])
        out[h] = y
        window.append(y)
    return out


# ---------------------------------------------------------------- checkpoints


def save_model(model: ForecastModel, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savez(directory / "weights.npz", **model.net.params)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "seed": model.config.seed,
        "best_val_loss": model.best_val_loss,
        "epoch_of_best": model.epoch_of_best,
        "checkpoint_metric": model.checkpoint_metric,
        "train_history": model.train_history,
        "val_history": model.val_history,
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return directory


def load_model(directory) -> ForecastModel:
    directory = Path(directory)
    with open(directory / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{directory}: not a forecaster checkpoint")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{directory}: unsupported checkpoint version {manifest.get('version')}")
    config = TrainConfig(**manifest["config"])
    with np.load(directory / "weights.npz") as z:
        params = {k: z[k] for k in z.files}
    net = StackedLSTM(params, config.layers, config.hidden, config.dropout)
    return ForecastModel(
        net, config, manifest["best_val_loss"], manifest["epoch_of_best"],
        manifest.get("checkpoint_metric", "validation"),
        manifest.get("train_history", []), manifest.get("val_history", []),
    )


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
