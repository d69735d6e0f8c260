"""Singularity analysis and limit extraction.

From z-series or coefficient sequences to the limit constants: C in
g_n ~ C / sqrt(pi n), the Laplace limit matrix H(lambda), its small-lambda
behaviour, and the linear growth of the harmonic function h.  Extrapolation
error bars are heuristic (the last correction of the ladder) and are always
reported, never hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    FitDiverged,
    OutOfDomain,
    PositivityViolated,
    RangeTooShort,
    StripViolation,
)
from .extrapolate import neville_to_zero
from .factorization import bstar_transforms, prefix_transforms
from .model import SemiMarkovModel, validate
from .oracle import weighted_min_series
from .spectral import variance


def central_binomial_sequence(length: int) -> np.ndarray:
    """a_n = C(2n, n) / 4^n via the recurrence a_n = a_{n-1} (2n-1) / (2n);
    the generating function is 1/sqrt(1-z), so a_n ~ 1/sqrt(pi n)."""
    a = np.empty(length + 1)
    a[0] = 1.0
    for n in range(1, length + 1):
        a[n] = a[n - 1] * (2 * n - 1) / (2 * n)
    return a


@dataclass(frozen=True)
class CoefficientFit:
    c_hat: float
    model_fit: tuple   # (C, c1) in g_n ~ C/sqrt(pi n) (1 + c1/n)
    max_n: int
    residual: float
    mode: str


def extract_constant(g, mode: str = "coeff") -> CoefficientFit:
    """Estimate C in g_n ~ C / sqrt(pi n).

    mode='coeff' fits sqrt(pi n) g_n = C (1 + c1/n) on the top half of the
    range; mode='abel' evaluates sqrt(1-z) sum g_n z^n on the ladder
    z_k = 1 - 4^{-k} and extrapolates in sqrt(1-z).  The hypotheses of the
    transfer step (boundedness of sqrt(1-z) G and existence of the limit)
    are checked, not assumed: FitDiverged signals the wrong singularity type.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim != 1 or g.size < 64:
        raise OutOfDomain("need a 1-d sequence with at least 64 terms")
    if np.any(g < 0):
        raise OutOfDomain("sequence must be non-negative")
    n_max = g.size - 1
    if mode == "coeff":
        ns = np.arange(n_max // 2, n_max + 1)
        y = np.sqrt(np.pi * ns) * g[ns]
        a = np.vstack([np.ones_like(ns, dtype=float), 1.0 / ns]).T
        (c, c_c1), *_ = np.linalg.lstsq(a, y, rcond=None)
        if abs(c) < 1e-12:
            raise FitDiverged("fitted constant is ~0: no sqrt singularity")
        resid = float(np.max(np.abs(y - a @ np.array([c, c_c1]))) / abs(c))
        if resid > 0.10:
            raise FitDiverged(f"coefficient fit residual {resid:.3f} exceeds 10%")
        return CoefficientFit(c_hat=float(c), model_fit=(float(c), float(c_c1 / c)),
                              max_n=n_max, residual=resid, mode=mode)
    if mode == "abel":
        k_max = max(2, int(np.floor(np.log(g.size / 16.0) / np.log(4.0))))
        ks = list(range(1, k_max + 1))
        ts, vals = [], []
        for k in ks:
            z = 1.0 - 4.0 ** (-k)
            ts.append(np.sqrt(1.0 - z))
            vals.append(np.sqrt(1.0 - z) * float(np.polynomial.polynomial.polyval(z, g)))
        if max(np.abs(vals)) > 25 * max(abs(vals[0]), 1e-12):
            raise FitDiverged("sqrt(1-z) G(z) is not bounded along the ladder")
        c, err = neville_to_zero(ts, vals)
        c = float(c)
        if abs(c) < 1e-12 or err > 0.10 * abs(c):
            raise FitDiverged(f"abel limit {c} with correction {err}: no clean limit")
        resid = abs(vals[-1] - c) / abs(c)
        return CoefficientFit(c_hat=c, model_fit=(c, 0.0), max_n=n_max,
                              residual=float(resid), mode=mode)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# the limit matrix H(lambda)
# ---------------------------------------------------------------------------

def _series_h_values(model: SemiMarkovModel, lams, order: int, z_ladder):
    """sqrt(1-z) (I + N*B*_z(lam)) (I + P C_z(0)) on the ladder, per lam."""
    nst = model.n_states
    nb = bstar_transforms(model, order, list(lams), "N*")
    pcv, _ = prefix_transforms(model, order, "ge0", [0.0], "P")
    pc = pcv[0]
    pc[0] = np.eye(nst)
    powers = np.power.outer(np.asarray(z_ladder), np.arange(order + 1))
    vc = np.real(np.tensordot(powers, pc, axes=(1, 0)))  # [Z, N, N]
    out = []
    for li in range(len(lams)):
        a = nb[li].copy()
        a[0] = np.eye(nst)
        va = np.real(np.tensordot(powers, a, axes=(1, 0)))
        out.append([np.sqrt(1 - z) * (va[zi] @ vc[zi]) for zi, z in enumerate(z_ladder)])
    return out


DEFAULT_Z_LADDER = tuple(1.0 - 4.0 ** (-k) for k in (1, 2, 3, 4))


@dataclass(frozen=True)
class HEstimate:
    lam: float
    H: np.ndarray             # the series-route limit (the better estimate)
    route_series: np.ndarray
    route_coeff: np.ndarray
    err_series: float
    err_coeff: float

    def routes_agree(self) -> bool:
        tol = self.err_series + self.err_coeff
        return bool(np.max(np.abs(self.route_series - self.route_coeff)) <= max(tol, 1e-6))


def H_estimate(model: SemiMarkovModel, lam: float, order: int = 4096) -> HEstimate:
    """H(lambda) = lim_z sqrt(1-z) G(z, lambda), two ways.

    route_series extrapolates the factored form on the z-ladder;
    route_coeff extracts lim sqrt(pi n) g_n from the exact minimum-transform
    coefficients.  Positive entries are required for lambda > 0.
    """
    lam = float(lam)
    if lam <= 0:
        raise OutOfDomain("H(lambda) is extracted for lambda > 0")
    if lam > model.alpha:
        raise StripViolation(f"lambda = {lam} outside the moment window {model.alpha}")
    variance(model)  # raises DegenerateVariance for flat models
    nst = model.n_states

    ladder = [z for z in DEFAULT_Z_LADDER]
    vals = _series_h_values(model, [lam], order, ladder)[0]
    ts = [np.sqrt(1 - z) for z in ladder]
    route_series, err_series = neville_to_zero(ts, vals)

    coeff_order = min(order, 2048)
    g = weighted_min_series(model, coeff_order, lam)
    route_coeff = np.zeros((nst, nst))
    resid = 0.0
    for i in range(nst):
        for j in range(nst):
            fit = extract_constant(g[:, i, j], mode="coeff")
            route_coeff[i, j] = fit.c_hat
            resid = max(resid, fit.residual * abs(fit.c_hat))
    if np.any(route_series <= 0):
        raise PositivityViolated(f"H(lambda) has a non-positive entry at lambda={lam}")
    return HEstimate(lam=lam, H=route_series, route_series=route_series,
                     route_coeff=route_coeff, err_series=float(err_series),
                     err_coeff=float(resid))


@dataclass(frozen=True)
class SmallLambdaLimit:
    limit: np.ndarray        # extrapolated lambda * H(lambda)
    expected: np.ndarray     # sqrt(2 / sigma^2) nu_j, constant rows
    max_rel_dev: float
    err: float


def small_lambda_limit(model: SemiMarkovModel, lam_ladder,
                       max_order: int = 32768) -> SmallLambdaLimit:
    """Extrapolate lambda * H(lambda) to lambda = 0 and compare with
    sqrt(2/sigma^2) nu_j (constant in the row index).

    H(lambda) per rung is extracted from the exact minimum-transform
    coefficients with the horizon adapted to the rung: the sqrt(pi n) g_n
    plateau only forms once lambda sqrt(n) is large, so T ~ (8/lambda)^2.
    (The z-ladder route is useless here: the factor varies on the scale
    sqrt(1-z) ~ lambda, below any affordable ladder.)"""
    lams = sorted(float(x) for x in lam_ladder)
    if len(lams) < 3:
        raise OutOfDomain("need at least 3 ladder rungs")
    var = variance(model)
    rep = validate(model)
    nst = model.n_states
    lh = []
    for lam in lams:
        order = int(min(max_order, max(1024, (8.0 / lam) ** 2)))
        g = weighted_min_series(model, order, lam)
        h_lam = np.zeros((nst, nst))
        ns = np.arange(order // 2, order + 1)
        a = np.vstack([np.ones_like(ns, dtype=float), 1.0 / ns]).T
        for i in range(nst):
            for j in range(nst):
                y = np.sqrt(np.pi * ns) * g[ns, i, j]
                sol, *_ = np.linalg.lstsq(a, y, rcond=None)
                h_lam[i, j] = sol[0]
        lh.append(lam * h_lam)
    limit, err = neville_to_zero(lams, lh)
    expected = np.tile(np.sqrt(2.0 / var.sigma2) * rep.stationary, (model.n_states, 1))
    dev = float(np.max(np.abs(limit - expected) / np.maximum(np.abs(expected), 1e-300)))
    return SmallLambdaLimit(limit=limit, expected=expected, max_rel_dev=dev, err=float(err))


# ---------------------------------------------------------------------------
# growth of the harmonic function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HGrowthReport:
    slopes: np.ndarray        # least-squares slope per (i, j), top half of range
    ratio_means: np.ndarray   # mean of h(x)/x over the full grid, per (i, j)
    candidate_no_pi: np.ndarray   # sqrt(2/sigma^2) nu_j
    candidate_pi: np.ndarray      # sqrt(2/(pi sigma^2)) nu_j
    winner: str               # which printed constant the data matches


def h_growth(model: SemiMarkovModel, h_values: np.ndarray, x_grid) -> HGrowthReport:
    """Linear-growth diagnostics of h: regression slopes on the top half of
    the x-range and mean ratios h(x)/x, reported against both candidate
    constants (with and without the pi factor) with the winner flagged.
    """
    xs = np.asarray(list(x_grid), dtype=float)
    h_values = np.asarray(h_values, dtype=float)
    var = variance(model)
    rep = validate(model)
    if xs.max() < 20.0 * np.sqrt(var.sigma2):
        raise RangeTooShort(f"x range must reach 20*sigma = {20*np.sqrt(var.sigma2)}")
    nst = model.n_states
    top = xs >= 0.5 * (xs.min() + xs.max())
    slopes = np.zeros((nst, nst))
    ratios = np.zeros((nst, nst))
    a = np.vstack([xs[top], np.ones(int(top.sum()))]).T
    for i in range(nst):
        for j in range(nst):
            sol, *_ = np.linalg.lstsq(a, h_values[top, i, j], rcond=None)
            slopes[i, j] = sol[0]
            ratios[i, j] = float(np.mean(h_values[:, i, j] / xs))
    cand_no_pi = np.tile(np.sqrt(2.0 / var.sigma2) * rep.stationary, (nst, 1))
    cand_pi = cand_no_pi / np.sqrt(np.pi)
    d_no_pi = float(np.max(np.abs(ratios - cand_no_pi)))
    d_pi = float(np.max(np.abs(ratios - cand_pi)))
    winner = "sqrt(2/(pi sigma^2)) nu_j" if d_pi < d_no_pi else "sqrt(2/sigma^2) nu_j"
    return HGrowthReport(slopes=slopes, ratio_means=ratios,
                         candidate_no_pi=cand_no_pi, candidate_pi=cand_pi, winner=winner)


# ---------------------------------------------------------------------------
# Kozlov-style sequence inequality checkers
# ---------------------------------------------------------------------------

def kozlov_coefficient_bound(seq, nu: float, s_grid=None):
    """Given monotone a_n >= 0 with sum a_n s^n <= c (1-s)^{-nu} on a grid of
    s values, the terms obey a_n <= c e (1-e^{-1})^{-nu} 2^{1+nu} n^{nu-1}.

    Fits the smallest grid-consistent c and checks the conclusion; returns
    (c, holds)."""
    a = np.asarray(seq, dtype=float)
    if np.any(a < 0):
        raise OutOfDomain("sequence must be non-negative")
    diffs = np.diff(a)
    if not (np.all(diffs <= 1e-12) or np.all(diffs >= -1e-12)):
        raise OutOfDomain("sequence must be monotone")
    s_grid = list(s_grid) if s_grid is not None else [0.5, 0.75, 0.9, 0.95, 0.99]
    c = 0.0
    for s in s_grid:
        total = float(np.polynomial.polynomial.polyval(s, a))
        c = max(c, total * (1.0 - s) ** nu)
    e = np.e
    ns = np.arange(2, a.size)
    bound = c * e * (1 - np.exp(-1.0)) ** (-nu) * 2 ** (1 + nu) * ns ** (nu - 1.0)
    holds = bool(np.all(a[2:] <= bound * (1 + 1e-12)))
    return float(c), holds


def kozlov_laplace_bound(lams, transform_vals, gamma: float, xs, h_vals):
    """Given nondecreasing H with H(0) = 0 and transform bound
    H~(lam) <= c lam^{-gamma} on (0, delta], check H(x) <= c e x^gamma for
    x >= 1/delta; returns (c, holds)."""
    lams = np.asarray(list(lams), dtype=float)
    tv = np.asarray(list(transform_vals), dtype=float)
    if np.any(lams <= 0):
        raise OutOfDomain("transform grid must be positive")
    delta = float(lams.max())
    c = float(np.max(tv * lams ** gamma))
    xs = np.asarray(list(xs), dtype=float)
    hv = np.asarray(list(h_vals), dtype=float)
    sel = xs >= 1.0 / delta
    holds = bool(np.all(hv[sel] <= c * np.e * xs[sel] ** gamma * (1 + 1e-12)))
    return c, holds
