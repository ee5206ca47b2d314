"""Independent reference implementations used by the tests.

These deliberately avoid the package's code paths: scalar loops instead of
matrix products, mpmath instead of log-sum-exp, dense solves instead of CG.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np

# frozen with mpmath at 50 digits (see responsibilities_mp below)
RHO_BETA0 = 0.96187764088907459
A_BETA0 = 0.63078313050504001
B_BETA0 = 0.025
RHO_BETA3 = 9.7493737651658162e-19
A_BETA3 = 1.8056284313677901e-20
SLAB_DENSITY_BETA3 = 3.6112568627355801e-20
B_BETA3 = 0.018520455517042947
BIAS_PROXY_K1 = 0.11712139482105109  # 0.1 / 0.9**1.5
G_V9 = 0.33322225924691769  # 1 / 3.001


def responsibilities_mp(beta, sigma, delta, v0, v1, dps=50):
    with mp.workdps(dps):
        beta, sigma, delta = mp.mpf(beta), mp.mpf(sigma), mp.mpf(delta)
        v0, v1 = mp.mpf(v0), mp.mpf(v1)
        a = delta * (2 * mp.pi * sigma**2 * v1) ** -0.5 * mp.exp(-(beta**2) / (2 * sigma**2 * v1))
        b = (1 - delta) / (2 * sigma * v0) * mp.exp(-abs(beta) / (sigma * v0))
        return float(a), float(b), float(a / (a + b))


def forward_scalar(net, beta, x):
    """Evaluate the network one multiply-add at a time."""
    out = []
    for row in np.atleast_2d(x):
        act = [float(v) for v in row]
        for layer, start in zip(net.layers, net.offsets):
            nxt = []
            for o in range(layer.fan_out):
                z = 0.0
                for i in range(layer.fan_in):
                    z += beta[start + o * layer.fan_in + i] * act[i]
                if layer.bias:
                    z += beta[start + layer.n_weights + o]
                if layer.activation == "tanh":
                    z = math.tanh(z)
                elif layer.activation == "relu":
                    z = max(z, 0.0)
                nxt.append(z)
            act = nxt
        out.append(act)
    return np.array(out)


def log_q(net, beta, x, y, n_total, sigma, kappa0, kappa1, sigma0):
    """Scalar log-posterior whose gradient grad_Q should return."""
    pred = forward_scalar(net, beta, x)
    n = len(x)
    ll = -(n_total / n) * np.sum((pred - np.reshape(y, pred.shape)) ** 2) / (2 * sigma**2)
    bs = beta[net.sparse_index]
    bd = beta[net.dense_index]
    lp = -np.sum(bd**2) / (2 * sigma0**2)
    lp += -np.sum(np.abs(bs) * kappa0) / sigma - np.sum(bs**2 * kappa1) / (2 * sigma**2)
    return ll + lp


def central_diff(f, beta, h=1e-6):
    g = np.zeros_like(beta)
    for i in range(beta.size):
        e = np.zeros_like(beta)
        e[i] = h
        g[i] = (f(beta + e) - f(beta - e)) / (2 * h)
    return g


def tpfa_dense(kappa, f=1.0, p_left=1.0, p_right=0.0):
    """Dense assembly of the same two-point scheme, cell by cell."""
    m = kappa.shape[0]
    h = 1.0 / m
    n = m * m
    A = np.zeros((n, n))
    rhs = np.full(n, f * h * h)

    def c(j, i):
        return j * m + i

    for j in range(m):
        for i in range(m):
            me = c(j, i)
            for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                jj, ii = j + dj, i + di
                if 0 <= jj < m and 0 <= ii < m:
                    t = 2 * kappa[j, i] * kappa[jj, ii] / (kappa[j, i] + kappa[jj, ii])
                    A[me, me] += t
                    A[me, c(jj, ii)] -= t
            if i == 0:
                A[me, me] += 2 * kappa[j, i]
                rhs[me] += 2 * kappa[j, i] * p_left
            if i == m - 1:
                A[me, me] += 2 * kappa[j, i]
                rhs[me] += 2 * kappa[j, i] * p_right
    return np.linalg.solve(A, rhs)
