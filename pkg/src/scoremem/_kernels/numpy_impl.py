"""Pure-numpy reference kernels.

Every function here has a twin with the same signature in ``numba_impl``.
The two are interchangeable up to floating-point summation order.
"""

import numpy as np


def mixture_stats(X, centers, var):
    """Posterior mean and log-normalizer of an isotropic Gaussian mixture.

    Parameters
    ----------
    X : (M, d) array
    centers : (N, d) array
    var : float, > 0

    Returns
    -------
    xbar : (M, d) array
        ``sum_n w_n(x) c_n`` with ``w`` the softmax of ``-|x - c_n|^2 / (2 var)``.
    lse : (M,) array
        ``log sum_n exp(-|x - c_n|^2 / (2 var))``.
    """
    diff2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    logw = diff2 * (-0.5 / var)
    mx = logw.max(axis=1, keepdims=True)
    e = np.exp(logw - mx)
    tot = e.sum(axis=1)
    w = e / tot[:, None]
    return w @ centers, mx[:, 0] + np.log(tot)


def mixture_weights(X, centers, var):
    diff2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    logw = diff2 * (-0.5 / var)
    logw -= logw.max(axis=1, keepdims=True)
    e = np.exp(logw)
    return e / e.sum(axis=1, keepdims=True)


def nearest_two(X, points):
    """Indices and squared distances of the nearest and second-nearest points."""
    diff2 = ((X[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
    order = np.argsort(diff2, axis=1, kind="stable")[:, :2]
    rows = np.arange(X.shape[0])
    i1, i2 = order[:, 0], order[:, 1]
    return i1, diff2[rows, i1], i2, diff2[rows, i2]


def _unpack(theta, din, width, dout):
    o = 0
    W1 = theta[o:o + din * width].reshape(din, width); o += din * width
    b1 = theta[o:o + width]; o += width
    W2 = theta[o:o + width * width].reshape(width, width); o += width * width
    b2 = theta[o:o + width]; o += width
    W3 = theta[o:o + width * dout].reshape(width, dout); o += width * dout
    b3 = theta[o:o + dout]
    return W1, b1, W2, b2, W3, b3


def mlp_forward(theta, Z, din, width, dout):
    W1, b1, W2, b2, W3, b3 = _unpack(theta, din, width, dout)
    h1 = np.maximum(Z @ W1 + b1, 0.0)
    h2 = np.maximum(h1 @ W2 + b2, 0.0)
    return h2 @ W3 + b3


def loss_and_grad(theta, Z, eta, sig, loss_code, c, din, width, dout):
    """Mean per-sample loss over a batch and its gradient w.r.t. ``theta``.

    loss_code 0: |sig*o + eta|^2, 1: |o + eta|^2, 2: |sig*o + eta|^2 + c|o|^2.
    """
    W1, b1, W2, b2, W3, b3 = _unpack(theta, din, width, dout)
    B = Z.shape[0]
    a1 = Z @ W1 + b1
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ W2 + b2
    h2 = np.maximum(a2, 0.0)
    o = h2 @ W3 + b3
    s = sig[:, None]
    if loss_code == 1:
        r = o + eta
        per = (r * r).sum(axis=1)
        go = 2.0 * r
    else:
        r = s * o + eta
        per = (r * r).sum(axis=1)
        go = 2.0 * s * r
        if loss_code == 2:
            per = per + c * (o * o).sum(axis=1)
            go = go + 2.0 * c * o
    go = go / B
    gW3 = h2.T @ go
    gb3 = go.sum(axis=0)
    g2 = (go @ W3.T) * (a2 > 0.0)
    gW2 = h1.T @ g2
    gb2 = g2.sum(axis=0)
    g1 = (g2 @ W2.T) * (a1 > 0.0)
    gW1 = Z.T @ g1
    gb1 = g1.sum(axis=0)
    grad = np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2, gW3.ravel(), gb3])
    return per.mean(), grad


def train_chunk(theta, adam_m, adam_v, step, Z, eta, sig, loss_code, c,
                lr, beta1, beta2, eps, din, width, dout):
    """Run ``Z.shape[0]`` full-batch Adam steps in place.

    ``Z`` is (E, B, din), ``eta`` (E, B, dout), ``sig`` (E, B).  Returns the
    per-step mean losses and the updated step counter.
    """
    E = Z.shape[0]
    losses = np.empty(E)
    for e in range(E):
        loss, g = loss_and_grad(theta, Z[e], eta[e], sig[e], loss_code, c, din, width, dout)
        losses[e] = loss
        if not np.isfinite(loss):
            return losses[:e + 1], step
        step += 1
        adam_m *= beta1
        adam_m += (1.0 - beta1) * g
        adam_v *= beta2
        adam_v += (1.0 - beta2) * g * g
        mhat = adam_m / (1.0 - beta1 ** step)
        vhat = adam_v / (1.0 - beta2 ** step)
        theta -= lr * mhat / (np.sqrt(vhat) + eps)
    return losses, step
