"""Exact lattice path-space engines.

Everything here is brute-force-exact (up to float rounding): joint law of
(X_n, S_n, m_n), weighted minimum transforms at large horizons via the
compressed (u, m)-representation with u = S - m, first-passage and ladder
laws, and the geometric tail sums compared against their spectral
prediction.  These are the ground truth the algebraic modules are tested
against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, OutOfDomain
from .measure_ring import LatticeMeasure, MeasureMatrix, ZSeries
from .model import SemiMarkovModel, iter_moves as _moves
from .spectral import solve_roots

DEFAULT_BUDGET = 2 << 30  # bytes


# ---------------------------------------------------------------------------
# joint law of (X_n, S_n, m_n)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointLawTable:
    n: int
    span: float
    start_state: int
    probs: dict = field(repr=False)  # (state j, s_index, m_index) -> probability

    def total_mass(self) -> float:
        return float(sum(self.probs.values()))

    def min_laplace(self, lam: float, n_states: int) -> np.ndarray:
        out = np.zeros(n_states, dtype=complex)
        for (j, _s, m), p in self.probs.items():
            out[j] += p * np.exp(lam * m * self.span)
        return out

    def min_cdf(self, x: float, n_states: int) -> np.ndarray:
        out = np.zeros(n_states)
        for (j, _s, m), p in self.probs.items():
            if m * self.span >= -x - 1e-12:
                out[j] += p
        return out

    def marginal_s(self, n_states: int) -> dict:
        out = {}
        for (j, s, _m), p in self.probs.items():
            out[(j, s)] = out.get((j, s), 0.0) + p
        return out


def joint_law(model: SemiMarkovModel, n: int, start_state: int = 0,
              budget_bytes: int = DEFAULT_BUDGET) -> JointLawTable:
    """Exact forward DP over (state, u = S - m, m), m = min(S_0..S_k) <= 0.

    Fails loudly (BudgetExceeded) rather than pruning: exactness is the
    contract here.
    """
    view, moves = _moves(model)
    nst = model.n_states
    o_min, o_max = view.min_offset, view.max_offset
    u_size = n * (o_max - o_min) + 1
    m_size = n * max(-o_min, 0) + 1
    needed = 2 * nst * u_size * m_size * 8
    if needed > budget_bytes:
        raise BudgetExceeded(needed, budget_bytes)
    # m index: im = m - m_lo with m_lo = -(m_size - 1); m = 0 at im = m_size - 1
    d = np.zeros((nst, u_size, m_size))
    d[start_state, 0, m_size - 1] = 1.0
    for _ in range(n):
        nd = np.zeros_like(d)
        for (l, j, offs, w) in moves:
            for o, wo in zip(offs, w):
                if o >= 0:
                    if o == 0:
                        nd[j] += wo * d[l]
                    else:
                        nd[j, o:, :] += wo * d[l, :u_size - o, :]
                else:
                    nd[j, : u_size + o, :] += wo * d[l, -o:, :]
                    for u in range(0, -o):
                        duo = u + o  # < 0: the minimum drops by -duo
                        nd[j, 0, : m_size + duo] += wo * d[l, u, -duo:]
        d = nd
    probs = {}
    m_lo = -(m_size - 1)
    for j in range(nst):
        us, ims = np.nonzero(d[j])
        for u, im in zip(us, ims):
            m = m_lo + int(im)
            probs[(j, int(u) + m, m)] = float(d[j, u, im])
    return JointLawTable(n=n, span=view.span, start_state=start_state, probs=probs)


# ---------------------------------------------------------------------------
# weighted minimum transforms, E_i[e^{a m_n + b S_n}; X_n = j]
# ---------------------------------------------------------------------------

def weighted_min_series(model: SemiMarkovModel, horizon: int, a: float,
                        b: float = 0.0) -> np.ndarray:
    """E_i[exp(a m_n + b S_n); X_n = j] for every n <= horizon, exactly.

    Tracks u = S - m >= 0 with the weight e^{(a+b) m} absorbed whenever the
    minimum drops (the compressed form of the (S, m) table); needs a + b >= 0
    and b <= 0 so both the in-flight and the report weights stay bounded.
    """
    if a + b < 0 or b > 1e-15:
        raise OutOfDomain("weighted series needs a + b >= 0 and b <= 0")
    view, moves = _moves(model)
    nst = model.n_states
    h = view.span
    o_max = max(view.max_offset, 0)
    width = horizon * o_max + 1
    c = a + b
    # g[i, j, u] = E_i[e^{c m_k} ; u_k = u, X_k = j]
    g = np.zeros((nst, nst, width))
    for i in range(nst):
        g[i, i, 0] = 1.0
    out = np.zeros((horizon + 1, nst, nst))
    np.einsum("ijU->ij", g, out=out[0])  # e^{0} at n = 0
    report_w = np.exp(b * h * np.arange(width))
    spill = {}
    for (l, j, offs, w) in moves:
        for o, wo in zip(offs, w):
            if o < 0:
                spill[(l, j, o)] = wo * np.exp(c * h * (np.arange(0, -o) + o))
    for n in range(1, horizon + 1):
        ng = np.zeros_like(g)
        for (l, j, offs, w) in moves:
            for o, wo in zip(offs, w):
                if o >= 0:
                    if o == 0:
                        ng[:, j, :] += wo * g[:, l, :]
                    else:
                        ng[:, j, o:] += wo * g[:, l, :width - o]
                else:
                    ng[:, j, : width + o] += wo * g[:, l, -o:]
                    ng[:, j, 0] += g[:, l, : -o] @ spill[(l, j, o)]
        g = ng
        out[n] = g @ report_w
    return out


def exact_min_laplace(model: SemiMarkovModel, n: int, lam: float) -> np.ndarray:
    """E_i[e^{lam m_n}; X_n = j] as an N x N matrix (lam >= 0)."""
    return weighted_min_series(model, n, float(lam), 0.0)[n]


# ---------------------------------------------------------------------------
# minimum CDF by barrier DP
# ---------------------------------------------------------------------------

def exact_min_cdf(model: SemiMarkovModel, n: int, x: float) -> np.ndarray:
    """P_i(m_n >= -x, X_n = j), x >= 0, by an absorbing-barrier DP."""
    return min_cdf_profile(model, n, [x])[0]


def min_cdf_profile(model: SemiMarkovModel, n: int, x_list) -> np.ndarray:
    """P_i(m_n >= -x, X_n = j) for each x in x_list; shape (len, N, N)."""
    return np.stack([min_cdf_series(model, n, x)[n] for x in x_list])


def min_cdf_series(model: SemiMarkovModel, n: int, x: float) -> np.ndarray:
    """P_i(m_k >= -x, X_k = j) for every k <= n, by one barrier DP run."""
    view, moves = _moves(model)
    nst = model.n_states
    h = view.span
    o_max = max(view.max_offset, 0)
    x = float(x)
    if x < 0:
        raise OutOfDomain(f"x = {x} must be >= 0")
    xk = int(np.floor(x / h + 1e-9))
    width = xk + n * o_max + 1  # s from -xk to n * o_max
    d = np.zeros((nst, nst, width))
    for i in range(nst):
        d[i, i, xk] = 1.0  # s = 0 sits at index xk
    out = np.zeros((n + 1, nst, nst))
    out[0] = d.sum(axis=2)
    for k in range(1, n + 1):
        nd = np.zeros_like(d)
        for (l, j, offs, w) in moves:
            for o, wo in zip(offs, w):
                if o >= 0:
                    if o == 0:
                        nd[:, j, :] += wo * d[:, l, :]
                    else:
                        nd[:, j, o:] += wo * d[:, l, :width - o]
                else:
                    # s + o below -xk is absorbed (path killed)
                    nd[:, j, : width + o] += wo * d[:, l, -o:]
        d = nd
        out[k] = d.sum(axis=2)
    return out


# ---------------------------------------------------------------------------
# first passage below zero, and ladder epochs
# ---------------------------------------------------------------------------

def first_passage_dp(model: SemiMarkovModel, horizon: int):
    """Stopped laws of T-*(first n with S_n < 0) plus survival masses.

    Returns (stopped, survival) where stopped[n] is the MeasureMatrix
    P_i(T-* = n, S_{T-*} in dy, X_{T-*} = j) (zero matrix at n = 0) and
    survival[n][i, j] = P_i(T-* > n, X_n = j).
    """
    view, moves = _moves(model)
    nst = model.n_states
    o_min = min(view.min_offset, 0)
    o_max = max(view.max_offset, 0)
    width = horizon * o_max + 1
    d = np.zeros((nst, nst, width))  # alive mass on s >= 0
    for i in range(nst):
        d[i, i, 0] = 1.0
    stopped = [MeasureMatrix.zero(nst, view.span)]
    survival = np.zeros((horizon + 1, nst, nst))
    for i in range(nst):
        survival[0, i, i] = 1.0
    for n in range(1, horizon + 1):
        nd = np.zeros_like(d)
        spill = np.zeros((nst, nst, -o_min))  # mass landing on s = o_min .. -1
        for (l, j, offs, w) in moves:
            for o, wo in zip(offs, w):
                if o >= 0:
                    if o == 0:
                        nd[:, j, :] += wo * d[:, l, :]
                    else:
                        nd[:, j, o:] += wo * d[:, l, :width - o]
                else:
                    nd[:, j, : width + o] += wo * d[:, l, -o:]
                    # s in [0, -o): lands at s + o in [o, 0) -> stopped
                    for u in range(0, -o):
                        spill[:, j, u + o - o_min] += wo * d[:, l, u]
        rows = []
        for i in range(nst):
            row = []
            for j in range(nst):
                row.append(LatticeMeasure(view.span, o_min, spill[i, j].copy()))
            rows.append(tuple(row))
        stopped.append(MeasureMatrix(view.span, tuple(rows)))
        d = nd
        survival[n] = d.sum(axis=2)
    return stopped, survival


@dataclass(frozen=True)
class LadderLawTable:
    l: int
    horizon: int
    start_state: int
    probs: dict          # (state k, s_index) -> P_i(S_{tau_l} in ., X = k, tau_l <= T)
    truncated_mass: float


def ladder_law(model: SemiMarkovModel, l: int, horizon: int,
               start_state: int = 0) -> LadderLawTable:
    """Law of (S_{tau_l}, X_{tau_l}) for the l-th strict descending ladder
    epoch, truncated at the horizon; tau_0 = 0 is the Dirac at (start, 0).

    Each ladder step is one run of the T-*-stopped law shifted to the
    current minimum, i.e. the l-fold ring power of the stopped kernel.
    """
    view, _ = _moves(model)
    nst = model.n_states
    if l == 0:
        probs = {(start_state, 0): 1.0}
        return LadderLawTable(l=0, horizon=horizon, start_state=start_state,
                              probs=probs, truncated_mass=0.0)
    stopped, _surv = first_passage_dp(model, horizon)
    kz = ZSeries(tuple(stopped))
    acc = kz
    for _ in range(l - 1):
        acc = acc.mul(kz)
    total = MeasureMatrix.zero(nst, view.span)
    for coeff in acc.coeffs:
        total = total + coeff
    probs = {}
    for k in range(nst):
        meas = total.entries[start_state][k]
        for idx, mass in zip(meas.min_index + np.arange(meas.coeffs.size), meas.coeffs):
            if mass != 0.0:
                probs[(k, int(idx))] = float(mass)
    mass = sum(probs.values())
    return LadderLawTable(l=l, horizon=horizon, start_state=start_state,
                          probs=probs, truncated_mass=float(1.0 - mass))


# ---------------------------------------------------------------------------
# geometric tail sums vs the spectral prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailSumReport:
    z: float
    x_grid: list
    ratios: list            # ||DP|| / ||prediction|| per x
    dp_values: list         # N x N matrices, sum_n z^n P_i(S_n >= x, X_n = j)
    predictions: list       # N x N matrices, Pi_+ e^{-lambda_+ x} / (lambda_+ beta_+)
    abs_deviation: list     # max-norm differences per x
    fitted_decay_rate: float  # exponential rate of the absolute deviation in x


def tail_sum(model: SemiMarkovModel, z: float, x_grid, horizon: int | None = None) -> TailSumReport:
    """Compare sum_n z^n P_i(S_n >= x, X_n = j) to its one-pole prediction.

    For spread-out models the ratio tends to 1; for lattice models it tends
    to the lattice constant lambda_+ / (1 - e^{-lambda_+ span}) instead, and
    what decays exponentially (at rate ~lambda_+) is the absolute deviation
    from the prediction.  Both are reported.
    """
    z = float(z)
    rp = solve_roots(model, z)  # validates z in (q, 1]
    if rp.double_root:
        raise OutOfDomain("tail sum needs z < 1")
    view, moves = _moves(model)
    nst = model.n_states
    h = view.span
    o_min, o_max = view.min_offset, view.max_offset
    x_grid = [float(x) for x in x_grid]
    need_steps = int(max(x_grid) / (h * max(o_max, 1))) + 8
    t_geo = int(np.ceil(np.log(1e-12) / np.log(z)))
    horizon = horizon or max(t_geo, 4 * need_steps)

    lo = horizon * o_min
    hi = horizon * o_max
    width = hi - lo + 1
    d = np.zeros((nst, nst, width))
    for i in range(nst):
        d[i, i, -lo] = 1.0
    acc = np.zeros_like(d)
    zp = 1.0
    for _ in range(horizon):
        nd = np.zeros_like(d)
        for (l, j, offs, w) in moves:
            for o, wo in zip(offs, w):
                if o >= 0:
                    if o == 0:
                        nd[:, j, :] += wo * d[:, l, :]
                    else:
                        nd[:, j, o:] += wo * d[:, l, :width - o]
                else:
                    nd[:, j, : width + o] += wo * d[:, l, -o:]
        d = nd
        zp *= z
        acc += zp * d

    lam_p = float(np.real(rp.lambda_plus))
    beta_p = float(np.real(rp.beta_plus))
    pi_p = np.real(np.asarray(rp.pi_plus))
    s_values = h * (lo + np.arange(width))
    ratios, dps, preds, devs = [], [], [], []
    for x in x_grid:
        sel = s_values >= x - 1e-12
        dp = acc[:, :, sel].sum(axis=2)
        pred = pi_p * np.exp(-lam_p * x) / (lam_p * beta_p)
        mask = np.abs(pred) > 1e-300
        ratio = float(np.linalg.norm(dp[mask]) / np.linalg.norm(pred[mask]))
        ratios.append(ratio)
        dps.append(dp)
        preds.append(pred)
        devs.append(float(np.max(np.abs(dp - pred))))
    if len(x_grid) >= 2:
        coef = np.polyfit(x_grid, np.log(np.maximum(devs, 1e-300)), 1)
        rate = float(-coef[0])
    else:
        rate = float("nan")
    return TailSumReport(z=z, x_grid=x_grid, ratios=ratios, dp_values=dps,
                         predictions=preds, abs_deviation=devs, fitted_decay_rate=rate)
