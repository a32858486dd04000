"""Shared test utilities."""

import numpy as np

from scoremem.neural import ScoreNet, TrainConfig, loss_sample


def _non_kink_input(net, sch, rng):
    while True:
        x0, t, eta = rng.standard_normal(2), rng.uniform(0.05, 1.0), rng.standard_normal(2)
        x = sch.mean_coeff(t) * x0 + sch.std(t) * eta
        W1, b1, W2, b2, _, _ = net.layers()
        a1 = net.inputs(x[None], t)[0] @ W1 + b1
        a2 = np.maximum(a1, 0) @ W2 + b2
        if np.abs(a1).min() > 1e-6 and np.abs(a2).min() > 1e-6:
            return x0, t, eta


def gradient_check(sch, loss, c=0.0, coords=20, inputs=10, seed=0):
    """Worst relative error of analytic vs central-difference gradients."""
    cfg = TrainConfig(loss=loss, c=c)
    net = ScoreNet.init(2, 16, seed, mode=cfg.mode)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(inputs):
        x0, t, eta = _non_kink_input(net, sch, rng)
        _, g = loss_sample(net, sch, x0, t, eta, cfg)
        for i in rng.choice(net.theta.size, coords, replace=False):
            h = 1e-6
            plus, minus = net.copy(), net.copy()
            plus.theta[i] += h
            minus.theta[i] -= h
            fd = (loss_sample(plus, sch, x0, t, eta, cfg)[0]
                  - loss_sample(minus, sch, x0, t, eta, cfg)[0]) / (2 * h)
            worst = max(worst, abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-8))
    return worst
