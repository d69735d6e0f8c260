"""Small extrapolation and fitting utilities shared by several modules."""

from __future__ import annotations

import numpy as np


def neville_to_zero(ts, values):
    """Polynomial extrapolation of values(t) to t = 0.

    values may be scalars or ndarrays sampled at the nodes ts.  Returns
    (limit, err_estimate) where the error estimate is the size of the last
    Neville correction, the usual heuristic bar (half of it would be the
    optimist's version; we keep the whole correction).
    """
    ts = [float(t) for t in ts]
    tab = [np.asarray(v, dtype=float) for v in values]
    if len(tab) < 2:
        raise ValueError("extrapolation needs at least 2 nodes")
    levels = len(tab)
    prev = tab[-1]
    for k in range(1, levels):
        nxt = []
        for i in range(len(tab) - 1):
            t0, t1 = ts[i], ts[i + k]
            nxt.append((t0 * tab[i + 1] - t1 * tab[i]) / (t0 - t1))
        prev = tab[-1]
        tab = nxt
    best = tab[0]
    err = float(np.max(np.abs(best - prev)))
    return best, err


def fit_power_exponent(xs, ys) -> float:
    """Least-squares slope of log y against log x (y ~ C x^p gives p)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.maximum(np.asarray(ys, dtype=float), 1e-300)
    coef = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(coef[0])


def fit_exponential_rate(xs, ys) -> float:
    """Rate r in y ~ C e^{-r x} by least squares on log y."""
    xs = np.asarray(xs, dtype=float)
    ys = np.maximum(np.asarray(ys, dtype=float), 1e-300)
    coef = np.polyfit(xs, np.log(ys), 1)
    return float(-coef[0])
