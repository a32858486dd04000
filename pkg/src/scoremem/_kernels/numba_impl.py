"""Compiled kernels; signatures mirror ``numpy_impl``."""

import math

import numba
import numpy as np

_jit = numba.njit(cache=True, fastmath=False, nogil=True)


@_jit
def _row_stats(x, centers, inv2v, logw):
    N, d = centers.shape
    mx = -np.inf
    for n in range(N):
        acc = 0.0
        for k in range(d):
            diff = x[k] - centers[n, k]
            acc += diff * diff
        logw[n] = -acc * inv2v
        if logw[n] > mx:
            mx = logw[n]
    tot = 0.0
    for n in range(N):
        logw[n] = math.exp(logw[n] - mx)
        tot += logw[n]
    return mx, tot


@_jit
def mixture_stats(X, centers, var):
    M, d = X.shape
    N = centers.shape[0]
    xbar = np.zeros((M, d))
    lse = np.empty(M)
    inv2v = 0.5 / var
    w = np.empty(N)
    for i in range(M):
        mx, tot = _row_stats(X[i], centers, inv2v, w)
        for n in range(N):
            wn = w[n] / tot
            for k in range(d):
                xbar[i, k] += wn * centers[n, k]
        lse[i] = mx + math.log(tot)
    return xbar, lse


@_jit
def mixture_weights(X, centers, var):
    M = X.shape[0]
    N = centers.shape[0]
    out = np.empty((M, N))
    inv2v = 0.5 / var
    for i in range(M):
        _mx, tot = _row_stats(X[i], centers, inv2v, out[i])
        for n in range(N):
            out[i, n] /= tot
    return out


@_jit
def nearest_two(X, points):
    M, d = X.shape
    N = points.shape[0]
    i1 = np.empty(M, dtype=np.int64)
    i2 = np.empty(M, dtype=np.int64)
    d1 = np.empty(M)
    d2 = np.empty(M)
    for i in range(M):
        b1 = np.inf
        b2 = np.inf
        j1 = -1
        j2 = -1
        for n in range(N):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - points[n, k]
                acc += diff * diff
            # strict comparisons keep the lowest index on ties (stable order)
            if acc < b1:
                b2, j2 = b1, j1
                b1, j1 = acc, n
            elif acc < b2:
                b2, j2 = acc, n
        i1[i], d1[i], i2[i], d2[i] = j1, b1, j2, b2
    return i1, d1, i2, d2


@_jit
def mlp_forward(theta, Z, din, width, dout):
    o1 = din * width
    o2 = o1 + width
    o3 = o2 + width * width
    o4 = o3 + width
    o5 = o4 + width * dout
    W1 = theta[:o1].reshape((din, width))
    b1 = theta[o1:o2]
    W2 = theta[o2:o3].reshape((width, width))
    b2 = theta[o3:o4]
    W3 = theta[o4:o5].reshape((width, dout))
    b3 = theta[o5:o5 + dout]
    h1 = np.maximum(Z @ W1 + b1, 0.0)
    h2 = np.maximum(h1 @ W2 + b2, 0.0)
    return h2 @ W3 + b3


@_jit
def loss_and_grad(theta, Z, eta, sig, loss_code, c, din, width, dout):
    o1 = din * width
    o2 = o1 + width
    o3 = o2 + width * width
    o4 = o3 + width
    o5 = o4 + width * dout
    W1 = theta[:o1].reshape((din, width))
    b1 = theta[o1:o2]
    W2 = theta[o2:o3].reshape((width, width))
    b2 = theta[o3:o4]
    W3 = theta[o4:o5].reshape((width, dout))
    b3 = theta[o5:o5 + dout]

    grad = np.zeros(theta.size)
    gW1 = grad[:o1].reshape((din, width))
    gb1 = grad[o1:o2]
    gW2 = grad[o2:o3].reshape((width, width))
    gb2 = grad[o3:o4]
    gW3 = grad[o4:o5].reshape((width, dout))
    gb3 = grad[o5:o5 + dout]

    B = Z.shape[0]
    a1 = np.empty(width)
    h1 = np.empty(width)
    a2 = np.empty(width)
    h2 = np.empty(width)
    o = np.empty(dout)
    go = np.empty(dout)
    g2 = np.empty(width)
    g1 = np.empty(width)
    total = 0.0
    inv_b = 1.0 / B
    for i in range(B):
        z = Z[i]
        # row-major accumulation keeps weight reads contiguous
        for j in range(width):
            a1[j] = b1[j]
        for k in range(din):
            zk = z[k]
            for j in range(width):
                a1[j] += zk * W1[k, j]
        for j in range(width):
            h1[j] = a1[j] if a1[j] > 0.0 else 0.0
            a2[j] = b2[j]
        for k in range(width):
            hk = h1[k]
            if hk != 0.0:
                for j in range(width):
                    a2[j] += hk * W2[k, j]
        for j in range(width):
            h2[j] = a2[j] if a2[j] > 0.0 else 0.0
        for j in range(dout):
            acc = b3[j]
            for k in range(width):
                acc += h2[k] * W3[k, j]
            o[j] = acc
        s = sig[i]
        per = 0.0
        for j in range(dout):
            if loss_code == 1:
                r = o[j] + eta[i, j]
                per += r * r
                go[j] = 2.0 * r
            else:
                r = s * o[j] + eta[i, j]
                per += r * r
                go[j] = 2.0 * s * r
                if loss_code == 2:
                    per += c * o[j] * o[j]
                    go[j] += 2.0 * c * o[j]
            go[j] *= inv_b
        total += per
        for j in range(dout):
            gb3[j] += go[j]
            for k in range(width):
                gW3[k, j] += h2[k] * go[j]
        for k in range(width):
            acc = 0.0
            if a2[k] > 0.0:
                for j in range(dout):
                    acc += W3[k, j] * go[j]
            g2[k] = acc
        for j in range(width):
            gb2[j] += g2[j]
        for k in range(width):
            hk = h1[k]
            if hk != 0.0:
                for j in range(width):
                    gW2[k, j] += hk * g2[j]
        for k in range(width):
            acc = 0.0
            if a1[k] > 0.0:
                for j in range(width):
                    acc += W2[k, j] * g2[j]
            g1[k] = acc
        for j in range(width):
            gb1[j] += g1[j]
        for k in range(din):
            zk = z[k]
            for j in range(width):
                gW1[k, j] += zk * g1[j]
    return total * inv_b, grad


@_jit
def train_chunk(theta, adam_m, adam_v, step, Z, eta, sig, loss_code, c,
                lr, beta1, beta2, eps, din, width, dout):
    E = Z.shape[0]
    losses = np.empty(E)
    P = theta.size
    for e in range(E):
        loss, g = loss_and_grad(theta, Z[e], eta[e], sig[e], loss_code, c, din, width, dout)
        losses[e] = loss
        if not np.isfinite(loss):
            return losses[:e + 1], step
        step += 1
        bc1 = 1.0 - beta1 ** step
        bc2 = 1.0 - beta2 ** step
        for p in range(P):
            adam_m[p] = beta1 * adam_m[p] + (1.0 - beta1) * g[p]
            adam_v[p] = beta2 * adam_v[p] + (1.0 - beta2) * g[p] * g[p]
            theta[p] -= lr * (adam_m[p] / bc1) / (math.sqrt(adam_v[p] / bc2) + eps)
    return losses, step
