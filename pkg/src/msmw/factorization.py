"""Wiener-Hopf factor series and the identities built from them.

The two factors of I - zP(lambda) are z-series of matrix measures: the
coefficient of z^n in C_z is the sub-probability law of (S_n, X_n) on paths
whose first n-1 partial sums stay >= 0, and the coefficient of B*_z is the
law on paths whose first n-1 partial sums stay strictly above the final
one.  B*_z is produced through the time-reversed (dual) chain, whose
prefix-constrained DP costs O(T^2) instead of the exponential direct
enumeration; the direct construction is kept as an independent oracle for
small orders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVariance, OutOfDomain, TailNotConverged
from .extrapolate import neville_to_zero
from .measure_ring import LatticeMeasure, MeasureMatrix, ZSeries
from .model import SemiMarkovModel, iter_moves, validate
from .oracle import weighted_min_series
from .spectral import perron, variance

REGIONS = ("ge0", "gt0", "le0", "lt0")


# ---------------------------------------------------------------------------
# prefix-constrained DP engine
# ---------------------------------------------------------------------------

def _prefix_dists(model: SemiMarkovModel, horizon: int, region: str):
    """Yield (n, dist, base) for n = 0 .. horizon-1 where dist[i, l, idx] is
    P_i(S_1..S_n all in region, S_n = (idx - base) * span, X_n = l).

    The region constrains the first n partial sums only; the caller applies
    one unconstrained step to turn dist at n-1 into the series coefficient n.
    """
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    positive = region in ("ge0", "gt0")
    strict = region in ("gt0", "lt0")
    view, moves = iter_moves(model)
    nst = model.n_states
    o_min, o_max = view.min_offset, view.max_offset
    if positive:
        lo, hi = 0, max(horizon - 1, 0) * max(o_max, 0)
    else:
        lo, hi = max(horizon - 1, 0) * min(o_min, 0), 0
    width = hi - lo + 1
    base = -lo
    d = np.zeros((nst, nst, width))
    for i in range(nst):
        d[i, i, base] = 1.0
    yield 0, d, base
    for n in range(1, horizon):
        nd = np.zeros_like(d)
        for (l, j, offs, w) in moves:
            for o, wo in zip(offs, w):
                if o == 0:
                    nd[:, j, :] += wo * d[:, l, :]
                elif o > 0:
                    nd[:, j, o:] += wo * d[:, l, : width - o]
                else:
                    nd[:, j, : width + o] += wo * d[:, l, -o:]
        if strict:
            nd[:, :, base] = 0.0  # kill paths sitting exactly at 0
        d = nd
        yield n, d, base


def _free_step_measure(model: SemiMarkovModel, dist: np.ndarray, base: int) -> np.ndarray:
    """Apply one unconstrained step: returns fm[i, j, idx] on the widened
    window with the same span, base shifted by -o_min."""
    view, moves = iter_moves(model)
    nst, width = dist.shape[0], dist.shape[2]
    o_min, o_max = min(view.min_offset, 0), max(view.max_offset, 0)
    out = np.zeros((nst, nst, width + o_max - o_min))
    for (l, j, offs, w) in moves:
        for o, wo in zip(offs, w):
            s = o - o_min
            out[:, j, s: s + width] += wo * dist[:, l, :]
    return out


def prefix_series(model: SemiMarkovModel, order: int, region: str) -> ZSeries:
    """z-series whose coefficient n is the matrix measure of (S_n, X_n) on
    paths with S_1 .. S_{n-1} in the region (coefficient 0 is zero)."""
    view, _ = iter_moves(model)
    nst = model.n_states
    o_min = min(view.min_offset, 0)
    coeffs = [MeasureMatrix.zero(nst, view.span)]
    for n, dist, base in _prefix_dists(model, order, region):
        fm = _free_step_measure(model, dist, base)
        min_index = -(base - o_min)
        rows = tuple(
            tuple(LatticeMeasure(view.span, min_index, fm[i, j].copy()) for j in range(nst))
            for i in range(nst)
        )
        coeffs.append(MeasureMatrix(view.span, rows))
        del n
    return ZSeries(tuple(coeffs))


def prefix_transforms(model: SemiMarkovModel, order: int, region: str,
                      lams, restrict: str | None = None):
    """Laplace transforms of the (restricted) prefix-series coefficients.

    Returns (values, survival): values[l, n] is the N x N transform of
    coefficient n restricted to the half-line tag (or the full measure when
    restrict is None) at lams[l]; survival[n][i, j] is the mass still
    satisfying the constraints after n steps.
    """
    view, _ = iter_moves(model)
    nst = model.n_states
    h = view.span
    o_min = min(view.min_offset, 0)
    lams = np.asarray(list(lams), dtype=complex)
    values = np.zeros((len(lams), order + 1, nst, nst), dtype=complex)
    survival = np.zeros((order + 1, nst, nst))
    for n, dist, base in _prefix_dists(model, order, region):
        survival[n] = dist.sum(axis=2)
        fm = _free_step_measure(model, dist, base)
        idx = np.arange(fm.shape[2]) - (base - o_min)  # lattice index of y
        if restrict is None:
            mask = np.ones(idx.size, dtype=bool)
        elif restrict == "N":
            mask = idx <= 0
        elif restrict == "N*":
            mask = idx < 0
        elif restrict == "P":
            mask = idx >= 0
        elif restrict == "P*":
            mask = idx > 0
        else:
            raise ValueError(f"unknown half-line tag {restrict!r}")
        sub = fm[:, :, mask]
        y = h * idx[mask]
        for li, lam in enumerate(lams):
            values[li, n + 1] = sub @ np.exp(lam * y)
    # survival after the last constrained step (index `order`)
    return values, survival


# ---------------------------------------------------------------------------
# dual chain
# ---------------------------------------------------------------------------

def dual_model(model: SemiMarkovModel) -> SemiMarkovModel:
    """Time-reversed chain: kernel nu_j p_{ji} / nu_i, step law of i -> j
    equal to the original law of j -> i."""
    rep = validate(model)
    nu = rep.stationary
    n = model.n_states
    rows = np.array([[nu[j] * model.kernel.rows[j, i] / nu[i] for j in range(n)]
                     for i in range(n)])
    # remove roundoff so the kernel validator's 1e-12 row-sum check passes
    rows = rows / rows.sum(axis=1, keepdims=True)
    steps = tuple(
        tuple(model.steps[j][i] if model.kernel.rows[j, i] > 0 else None for j in range(n))
        for i in range(n)
    )
    from .model import MarkovKernel

    return SemiMarkovModel(
        kernel=MarkovKernel(rows),
        steps=steps,
        moment_window=model.moment_window,
        spread_out=model.spread_out,
        name=(model.name + ":dual") if model.name else "dual",
    )


def _dualize_series(series: ZSeries, nu: np.ndarray) -> ZSeries:
    """Map a dual-chain prefix series to the original-chain factor:
    coefficient-wise X^{-1} (.)^t X with X = diag(nu)."""
    return ZSeries(tuple(c.transpose().conjugate_by_diagonal(nu) for c in series.coeffs))


# ---------------------------------------------------------------------------
# the four factor series
# ---------------------------------------------------------------------------

def c_series(model: SemiMarkovModel, order: int) -> ZSeries:
    """C_z: prefix sums >= 0, free final step."""
    return prefix_series(model, order, "ge0")


def cstar_series(model: SemiMarkovModel, order: int) -> ZSeries:
    """C*_z: prefix sums > 0, free final step."""
    return prefix_series(model, order, "gt0")


def _direct_end_min_series(model: SemiMarkovModel, order: int, strict: bool) -> ZSeries:
    """Direct DP for B_z / B*_z: track (state, S_k, min(S_1..S_k)) and collect
    paths whose final step lands (strictly) below the running prefix minimum.
    Quadratic state space, so small orders only; kept as an oracle fully
    independent of the dual-chain route.
    """
    from .measure_ring import step_measure

    view, moves = iter_moves(model)
    nst = model.n_states
    h = view.span
    o_min, o_max = min(view.min_offset, 0), max(view.max_offset, 0)
    coeffs = [MeasureMatrix.zero(nst, view.span)]
    if order >= 1:
        coeffs.append(step_measure(model))  # n = 1: the constraints are vacuous
    span_lo = order * o_min
    span_hi = order * o_max
    width = span_hi - span_lo + 1
    base = -span_lo
    out_width = width + o_max - o_min
    # d[i, l, s_idx, m_idx]: after k >= 1 steps, S_k = s, min(S_1..S_k) = m
    d = np.zeros((nst, nst, width, width))
    for (i, j, offs, w) in moves:
        for o, wo in zip(offs, w):
            d[i, j, base + o, base + o] += wo
    for _n in range(2, order + 1):
        out = np.zeros((nst, nst, out_width))
        nd = np.zeros_like(d)
        # suffix[..., s_idx, t] = sum over m_idx >= t
        suffix = np.cumsum(d[:, :, :, ::-1], axis=3)[:, :, :, ::-1]
        for (l, j, offs, w) in moves:
            for o, wo in zip(offs, w):
                for s_idx in range(width):
                    y_idx = s_idx + o  # = y + base, may leave [0, width)
                    t = y_idx + (1 if strict else 0)
                    if t >= width:
                        continue
                    if t <= 0:
                        keep = d[:, l, s_idx, :].sum(axis=1)
                    else:
                        keep = suffix[:, l, s_idx, t]
                    out[:, j, y_idx - o_min] += wo * keep
                # continuation: shift s by o, then fold m to min(m, s + o)
                src = d[:, l, :, :]
                shifted = np.zeros_like(src)
                if o == 0:
                    shifted[:, :, :] = src
                elif o > 0:
                    shifted[:, o:, :] = src[:, : width - o, :]
                else:
                    shifted[:, : width + o, :] = src[:, -o:, :]
                for s_idx in range(width):
                    fold = shifted[:, s_idx, s_idx + 1:].sum(axis=1)
                    shifted[:, s_idx, s_idx + 1:] = 0.0
                    shifted[:, s_idx, s_idx] += fold
                nd[:, j, :, :] += wo * shifted
        d = nd
        min_index = span_lo + o_min
        rows = tuple(
            tuple(LatticeMeasure(h, min_index, out[i, j].copy()) for j in range(nst))
            for i in range(nst)
        )
        coeffs.append(MeasureMatrix(h, rows))
    return ZSeries(tuple(coeffs))


def bstar_series(model: SemiMarkovModel, order: int, route: str = "dual") -> ZSeries:
    """B*_z: prefix sums strictly above the final sum, free final value.

    route='dual' runs the prefix DP on the time-reversed chain with strictly
    negative constraints and maps back by X^{-1}(.)^t X; route='direct'
    enumerates with the quadratic (S, min) DP (small orders only).
    """
    if route == "dual":
        nu = validate(model).stationary
        return _dualize_series(prefix_series(dual_model(model), order, "lt0"), nu)
    if route == "direct":
        return _direct_end_min_series(model, order, strict=True)
    raise ValueError(f"unknown route {route!r}")


def b_series(model: SemiMarkovModel, order: int, route: str = "dual") -> ZSeries:
    """B_z: prefix sums weakly above the final sum (weak twin of B*_z)."""
    if route == "dual":
        nu = validate(model).stationary
        return _dualize_series(prefix_series(dual_model(model), order, "le0"), nu)
    if route == "direct":
        return _direct_end_min_series(model, order, strict=False)
    raise ValueError(f"unknown route {route!r}")


def bstar_transforms(model: SemiMarkovModel, order: int, lams, restrict: str | None):
    """Laplace transforms of (restricted) B*_z coefficients via the dual DP.

    Returns values[l, n, a, b]; restriction tags refer to the y variable of
    B*_z itself.
    """
    nu = validate(model).stationary
    vals, _surv = prefix_transforms(dual_model(model), order, "lt0", lams, restrict)
    scale = nu[None, None, None, :] / nu[None, None, :, None]
    return np.transpose(vals, (0, 1, 3, 2)) * scale


@dataclass(frozen=True)
class FactorSeries:
    c: ZSeries
    cstar: ZSeries
    bstar: ZSeries
    b: ZSeries
    order: int


def build_factor_series(model: SemiMarkovModel, order: int) -> FactorSeries:
    return FactorSeries(
        c=c_series(model, order),
        cstar=cstar_series(model, order),
        bstar=bstar_series(model, order),
        b=b_series(model, order),
        order=order,
    )


# ---------------------------------------------------------------------------
# identity verification
# ---------------------------------------------------------------------------

def _series_residual_to(product: ZSeries, target_c0: MeasureMatrix,
                        target_c1: MeasureMatrix) -> float:
    res = (product.coeffs[0] - target_c0).tv()
    if product.order >= 1:
        res = max(res, (product.coeffs[1] - target_c1).tv())
    for c in product.coeffs[2:]:
        res = max(res, c.tv())
    return res


def verify_wiener_hopf(model: SemiMarkovModel, lam_grid, order: int) -> float:
    """Residual of (I - P B*_z)(I - N* C_z) = I - zM, coefficientwise in z
    (total variation), plus evaluation at sample (z, lambda) points."""
    from .measure_ring import step_measure

    nst = model.n_states
    span = model.span
    ident = ZSeries.identity(nst, span, order)
    f1 = ident - bstar_series(model, order).restrict("P")
    f2 = ident - c_series(model, order).restrict("N*")
    product = f1.mul(f2)
    m = step_measure(model)
    res = _series_residual_to(product, MeasureMatrix.identity(nst, span), -m)
    # spot evaluation of both sides per the extended-strip identity; the
    # truncated product (not the product of truncations, whose cross terms
    # above order T are not pinned) is the faithful left-hand side
    from .spectral import transfer_entries

    for lam in lam_grid:
        for z in (0.35, 0.7 + 0.3j, 0.95):
            lhs = np.eye(nst) - z * transfer_entries(model, lam)
            rhs = product.laplace_eval(z, lam)
            res = max(res, float(np.max(np.abs(lhs - rhs))))
    return res


def verify_inverses(model: SemiMarkovModel, lam_grid, order: int) -> float:
    """Residual of the two one-sided inverse identities, as z-series:
    (I - P B*_z)(I + P C_z) = I  and  (I - N* C_z)(I + N* B*_z) = I,
    checked as two-sided inverses and evaluated on the admissible lambda."""
    nst = model.n_states
    span = model.span
    ident = ZSeries.identity(nst, span, order)
    pb = bstar_series(model, order).restrict("P")
    nc = c_series(model, order).restrict("N*")
    pc = c_series(model, order).restrict("P")
    nb = bstar_series(model, order).restrict("N*")
    eye = MeasureMatrix.identity(nst, span)
    zero = MeasureMatrix.zero(nst, span)
    res = 0.0
    products = {
        "pb_pc": (ident - pb).mul(ident + pc),
        "pc_pb": (ident + pc).mul(ident - pb),
        "nc_nb": (ident - nc).mul(ident + nb),
        "nb_nc": (ident + nb).mul(ident - nc),
    }
    for prod in products.values():
        res = max(res, _series_residual_to(prod, eye, zero))
    # evaluate the truncated product series on the admissible lambda sides
    for lam in lam_grid:
        lam = complex(lam)
        for z in (0.4, 0.9):
            if lam.real <= 0:
                val = products["pb_pc"].laplace_eval(z, lam)
                res = max(res, float(np.max(np.abs(val - np.eye(nst)))))
            if lam.real >= 0:
                val = products["nc_nb"].laplace_eval(z, lam)
                res = max(res, float(np.max(np.abs(val - np.eye(nst)))))
    return res


# ---------------------------------------------------------------------------
# stopped-time transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StoppedTransform:
    kind: str
    z: float
    lam: complex
    value: np.ndarray
    unfinished_mass: float
    tail_bound: float


_KIND_TABLE = {
    "T-*": ("ge0", "N*"),
    "T-": ("gt0", "N"),
    "T+": ("lt0", "P"),
    "T+*": ("le0", "P*"),
}


def stopped_transform(model: SemiMarkovModel, kind: str, z: float, lam: complex,
                      horizon: int = 256) -> StoppedTransform:
    """E_i(z^T e^{lam S_T}; X_T = j) for T one of the four first entrance
    times, truncated at the horizon with the unfinished mass reported."""
    if kind not in _KIND_TABLE:
        raise ValueError(f"unknown stopping time {kind!r}; one of {sorted(_KIND_TABLE)}")
    if not (0.0 <= z <= 1.0):
        raise OutOfDomain(f"z = {z} outside [0, 1]")
    region, restr = _KIND_TABLE[kind]
    vals, surv = prefix_transforms(model, horizon, region, [lam], restr)
    powers = z ** np.arange(horizon + 1)
    value = np.tensordot(powers, vals[0], axes=(0, 0))
    alive = float(surv[horizon - 1].sum(axis=1).max()) if horizon >= 1 else 1.0
    # crossing values sit within one step of the boundary
    view, _ = iter_moves(model)
    band = max(abs(view.min_offset), abs(view.max_offset)) * view.span
    weight = float(np.exp(abs(complex(lam).real) * band))
    tail = (z ** (horizon + 1)) * alive * weight if z < 1 else alive * weight
    return StoppedTransform(kind=kind, z=z, lam=complex(lam), value=value,
                            unfinished_mass=alive, tail_bound=float(tail))


# ---------------------------------------------------------------------------
# minimum transform (two routes) and Theorem-3 partial sums
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MinTransformSeries:
    lam: float
    order: int
    g: np.ndarray  # g[n, i, j] = E_i(e^{lam m_n}; X_n = j)
    route: str


def min_transform(model: SemiMarkovModel, lam: float, order: int,
                  route: str = "series") -> MinTransformSeries:
    """g_n = E_i(e^{lam m_n}; X_n = j), n <= order, lam >= 0.

    route='series' builds the Cauchy product of the two one-sided factors
    (negative-restricted B*_z at lam, positive-restricted C_z at 0);
    route='oracle' runs the exact path-space DP.  The two must agree to
    float accuracy.
    """
    lam = float(lam)
    if lam < 0:
        raise OutOfDomain("minimum transform needs lam >= 0")
    if route == "oracle":
        g = weighted_min_series(model, order, lam, 0.0)
        return MinTransformSeries(lam=lam, order=order, g=g, route=route)
    if route != "series":
        raise ValueError(f"unknown route {route!r}")
    nst = model.n_states
    a = bstar_transforms(model, order, [lam], "N*")[0]   # [n, i, j]
    bvals, _ = prefix_transforms(model, order, "ge0", [0.0], "P")
    b = bvals[0]
    a[0] = np.eye(nst)
    b[0] = np.eye(nst)
    g = np.zeros((order + 1, nst, nst))
    for n in range(order + 1):
        acc = np.zeros((nst, nst), dtype=complex)
        for p in range(n + 1):
            acc += a[p] @ b[n - p]
        g[n] = np.real(acc)
    return MinTransformSeries(lam=lam, order=order, g=g, route="series")


def theorem3_partial_sums(model: SemiMarkovModel, lam: float, eps: float,
                          horizon: int):
    """Partial sums of E_i[e^{lam m_n - eps S_n}; X_n = j] up to the horizon.

    Returns (partial, cauchy_gap): partial[n] is the cumulative sum through
    n, and cauchy_gap is the largest entrywise increment over the last tenth
    of the horizon relative to the final value (summability evidence)."""
    if not (0.0 < eps < lam):
        raise OutOfDomain(f"needs lam > eps > 0, got lam={lam}, eps={eps}")
    terms = weighted_min_series(model, horizon, float(lam), -float(eps))
    partial = np.cumsum(terms, axis=0)
    n0 = int(0.9 * horizon)
    gap = float(np.max((partial[horizon] - partial[n0]) / np.maximum(partial[horizon], 1e-300)))
    return partial, gap


# ---------------------------------------------------------------------------
# the limit matrices A+ and A-
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LimitMatrices:
    a_plus: np.ndarray
    a_minus: np.ndarray
    product_residual: float
    err_plus: float
    err_minus: float
    lambda_route: dict
    tail_bound: float


def estimate_limits(model: SemiMarkovModel, lam_list, z_list, order: int) -> LimitMatrices:
    """A- and A+ from the sqrt(1-z)-scaled factors at z -> 1, extrapolated on
    the given ladder, with the lam -> 0 route at z = 1 as a cross-check and
    the product identity -(sigma^2/2) A- A+ = Pi(0) as the residual."""
    var = variance(model)  # raises DegenerateVariance when flat
    nst = model.n_states
    z_list = sorted(float(z) for z in z_list)
    if any(not (0 < z < 1) for z in z_list):
        raise OutOfDomain("z ladder must lie in (0, 1); z = 1 must be extrapolated")
    if len(z_list) < 3:
        raise OutOfDomain("need at least three ladder rungs to extrapolate")

    nb = bstar_transforms(model, order, [0.0], "N*")[0]  # [n, i, j]
    pcv, _surv = prefix_transforms(model, order, "ge0", [0.0], "P")
    pc = pcv[0]
    nb[0] = np.eye(nst)
    pc[0] = np.eye(nst)
    powers = np.power.outer(np.asarray(z_list), np.arange(order + 1))  # [Z, n]
    vb = np.real(np.tensordot(powers, nb, axes=(1, 0)))  # I + N*B*_z(0)
    vc = np.real(np.tensordot(powers, pc, axes=(1, 0)))  # I + P C_z(0)

    ts = [np.sqrt(1.0 - z) for z in z_list]
    scaled_b = [t * v for t, v in zip(ts, vb)]
    scaled_c = [t * v for t, v in zip(ts, vc)]
    # extrapolate in t = sqrt(1 - z), smallest t last
    ts_rev = ts[::-1]
    lim_b, err_b = neville_to_zero(ts_rev, scaled_b[::-1])
    lim_c, err_c = neville_to_zero(ts_rev, scaled_c[::-1])

    # truncation control: coefficients are sub-probability masses, so the
    # series tail at the largest z is below z^{T+1} / (1 - z)
    z_max = max(z_list)
    tail = z_max ** (order + 1) / (1.0 - z_max)
    step = float(np.max(np.abs(np.asarray(scaled_b[-1]) - lim_b))) + 1e-300
    if tail > 0.1 * max(step, err_b, 1e-12):
        raise TailNotConverged(
            f"series tail bound {tail:.2e} exceeds 10% of the extrapolation step {step:.2e}"
        )

    coef = np.sqrt(2.0 / var.sigma2)
    a_minus = coef * lim_b
    a_plus = -coef * lim_c

    pi0 = np.real(np.asarray(perron(model, 0.0).projector))
    residual = float(np.max(np.abs(-(var.sigma2 / 2.0) * (a_minus @ a_plus) - pi0)))

    lam_route = {}
    if lam_list:
        nbl = bstar_transforms(model, order, list(lam_list), "N*")
        for li, lam in enumerate(lam_list):
            vals = nbl[li]
            vals[0] = np.eye(nst)
            total = np.real(vals.sum(axis=0))
            lam_route[float(lam)] = float(lam) * total
    return LimitMatrices(
        a_plus=a_plus,
        a_minus=a_minus,
        product_residual=residual,
        err_plus=float(coef * err_c),
        err_minus=float(coef * err_b),
        lambda_route=lam_route,
        tail_bound=float(tail),
    )
