"""Compiled inner loop for the built-in problems.

Each built-in problem carries a ``kernel`` tuple
``(kind, A, b, lam, c, lower, upper, eps)``; ``run_chunk`` iterates the
proximal subgradient step for a block of precomputed steps and noise rows.
"""

import math

import numpy as np
from numba import njit

from .problems import (
    KERNEL_ABS1D,
    KERNEL_BOX_LINEAR,
    KERNEL_LASSO,
    KERNEL_NORM,
)

STATUS_OK = 0
STATUS_BOUND = 1
STATUS_NONFINITE = 2


@njit(cache=True)
def _subgrad(kind, x, A, b, lam, c, eps, out):
    d = x.shape[0]
    if kind == KERNEL_ABS1D:
        out[0] = np.sign(x[0])
    elif kind == KERNEL_NORM:
        s = 0.0
        for i in range(d):
            s += x[i] * x[i]
        nx = math.sqrt(s)
        for i in range(d):
            out[i] = x[i] / nx if nx > 0 else 0.0
    elif kind == KERNEL_LASSO:
        m = A.shape[0]
        r = np.empty(m)
        for j in range(m):
            acc = -b[j]
            for i in range(d):
                acc += A[j, i] * x[i]
            r[j] = acc
        for i in range(d):
            acc = 0.0
            for j in range(m):
                acc += A[j, i] * r[j]
            out[i] = acc
    elif kind == KERNEL_BOX_LINEAR:
        for i in range(d):
            out[i] = c[i]
    else:
        px = x[0]
        py = x[1]
        r2 = px * px + py * py
        if r2 == 0.0:
            out[0] = 0.0
            out[1] = 0.0
        else:
            r = math.sqrt(r2)
            s = r - 1.0
            den = 1.0 + r2
            h = 2.0 * py / den
            dh_x = -4.0 * py * px / (den * den)
            dh_y = 2.0 / den - 4.0 * py * py / (den * den)
            dphi = 2.0 * s
            if s > 0.0:
                dphi += lam
            elif s < 0.0:
                dphi -= lam
            phi = s * s + lam * abs(s)
            radial = dphi * (1.0 + eps * h) / r
            out[0] = radial * px + phi * eps * dh_x
            out[1] = radial * py + phi * eps * dh_y


@njit(cache=True)
def _prox(kind, gamma, y, lam, lower, upper, out):
    d = y.shape[0]
    if kind == KERNEL_LASSO:
        t = gamma * lam
        for i in range(d):
            out[i] = np.sign(y[i]) * max(abs(y[i]) - t, 0.0)
    elif kind == KERNEL_BOX_LINEAR:
        for i in range(d):
            out[i] = min(max(y[i], lower[i]), upper[i])
    else:
        for i in range(d):
            out[i] = y[i]


@njit(cache=True)
def _value(kind, x, A, b, lam, c, eps):
    d = x.shape[0]
    if kind == KERNEL_ABS1D:
        return abs(x[0])
    if kind == KERNEL_NORM:
        s = 0.0
        for i in range(d):
            s += x[i] * x[i]
        return math.sqrt(s)
    if kind == KERNEL_LASSO:
        tot = 0.0
        for j in range(A.shape[0]):
            acc = -b[j]
            for i in range(d):
                acc += A[j, i] * x[i]
            tot += acc * acc
        pen = 0.0
        for i in range(d):
            pen += abs(x[i])
        return 0.5 * tot + lam * pen
    if kind == KERNEL_BOX_LINEAR:
        tot = 0.0
        for i in range(d):
            tot += c[i] * x[i]
        return tot
    r = math.sqrt(x[0] * x[0] + x[1] * x[1])
    h = 2.0 * x[1] / (1.0 + r * r)
    # for the circle problem ``lam`` holds the radial kink weight
    s = r - 1.0
    return (s * s + lam * abs(s)) * (1.0 + eps * h)


@njit(cache=True)
def run_chunk(kind, A, b, lam, c, lower, upper, eps, gammas, etas, bound, X, V, XH, W, FG):
    """Iterate from ``X[0]`` over ``len(gammas)`` steps.

    Returns ``(status, count)`` where ``count`` is the number of completed
    steps. With ``STATUS_BOUND`` the last completed step produced the
    out-of-bound iterate ``X[count]``; with ``STATUS_NONFINITE`` step
    ``count`` produced a non-finite value and was discarded.
    """
    k = gammas.shape[0]
    d = X.shape[1]
    FG[0] = _value(kind, X[0], A, b, lam, c, eps)
    xn = np.empty(d)
    for n in range(k):
        g = gammas[n]
        x = X[n]
        v = V[n]
        _subgrad(kind, x, A, b, lam, c, eps, v)
        for i in range(d):
            XH[n, i] = x[i] - g * v[i] + g * etas[n, i]
        _prox(kind, g, XH[n], lam, lower, upper, xn)
        ok = True
        norm2 = 0.0
        for i in range(d):
            W[n, i] = (x[i] - xn[i]) / g + etas[n, i]
            X[n + 1, i] = xn[i]
            norm2 += xn[i] * xn[i]
            if not (math.isfinite(xn[i]) and math.isfinite(W[n, i]) and math.isfinite(v[i])):
                ok = False
        fg = _value(kind, xn, A, b, lam, c, eps)
        if not ok or not math.isfinite(fg):
            return STATUS_NONFINITE, n
        FG[n + 1] = fg
        if math.sqrt(norm2) > bound:
            return STATUS_BOUND, n + 1
    return STATUS_OK, k
