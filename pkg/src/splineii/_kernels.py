"""Compiled inner loops for B-spline moment accumulation.

Both kernels walk the points once and scatter the ``r`` nonzero local
B-spline pieces into the moment vector. Piece ``s`` of a point in cell ``c``
belongs to the 0-based basis index ``c - s + r - 1``.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, fastmath=False, boundscheck=False)
def accumulate(x, scale, coef, n_cells, out):  # pragma: no cover - compiled
    r = coef.shape[0]
    out[:] = 0.0
    hi = n_cells - 1
    for i in range(x.size):
        t = x[i] * scale
        c = int(np.floor(t))
        if c > hi:
            c = hi
        elif c < 0:
            c = 0
        u = t - c
        base = c + r - 1
        for s in range(r):
            v = coef[s, r - 1]
            for p in range(r - 2, -1, -1):
                v = v * u + coef[s, p]
            out[base - s] += v
    return out


@numba.njit(cache=True, fastmath=False, boundscheck=False)
def accumulate_weighted(x, weights, scale, coef, n_cells, out):  # pragma: no cover
    r = coef.shape[0]
    b = weights.shape[1]
    out[:, :] = 0.0
    hi = n_cells - 1
    for i in range(x.size):
        t = x[i] * scale
        c = int(np.floor(t))
        if c > hi:
            c = hi
        elif c < 0:
            c = 0
        u = t - c
        base = c + r - 1
        for s in range(r):
            v = coef[s, r - 1]
            for p in range(r - 2, -1, -1):
                v = v * u + coef[s, p]
            for q in range(b):
                out[base - s, q] += v * weights[i, q]
    return out
