"""Central finite-difference gradient check for the forecaster network."""
import numpy as np

from dscsrgm.forecaster import StackedLSTM, TrainConfig


def max_relative_error(layers=1, hidden=4, n=3, window=8, dropout=0.0, seed=0, h=1e-5):
    cfg = TrainConfig(window=window, layers=layers, hidden=hidden, dropout=dropout,
                      dtype="float64")
    rng = np.random.default_rng(seed)
    net = StackedLSTM.initialise(cfg, rng)
    # larger weights than the default init so every gate is exercised
    for k in net.params:
        net.params[k] = net.params[k] + rng.normal(0, 0.3, net.params[k].shape)
    X = rng.random((n, window))
    y = rng.random(n) * 1.5
    train = dropout > 0

    def loss():
        # identical dropout masks on every evaluation
        return net.loss_and_grads(X, y, train=train, rng=np.random.default_rng(99))[0]

    _, grads = net.loss_and_grads(X, y, train=train, rng=np.random.default_rng(99))
    worst = 0.0
    for k, p in net.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss()
            p[idx] = old - h
            down = loss()
            p[idx] = old
            num = (up - down) / (2 * h)
            ana = grads[k][idx]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-12))
    return worst
