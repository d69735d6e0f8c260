"""Transfer-matrix calculus: dominant eigen-triple, resolvent, drift and
variance, the root equation z*k(lambda) = 1, spectral-radius scans, and the
two contour-integral identities used by the tail estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from .errors import (
    DegenerateVariance,
    EigenvalueCollision,
    OutOfDomain,
    PoleHit,
    QuadratureNonConvergence,
    StripViolation,
)
from .model import (
    Lattice,
    SemiMarkovModel,
    common_refinement_factor,
    mean_matrix,
    refine_lattice,
    second_moment_matrix,
    shift_law,
    step_laplace,
    step_laplace_deriv,
    validate,
)

GAP_TOL = 1e-8
POLE_TOL = 1e-8
FD_STEP = 1e-3


# ---------------------------------------------------------------------------
# transfer matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferMatrix:
    lam: complex
    entries: np.ndarray


def transfer_entries(model: SemiMarkovModel, lam: complex, deriv: int = 0) -> np.ndarray:
    """P(lam) (or its entrywise lam-derivative) as a dense complex matrix."""
    if abs(complex(lam).real) > model.alpha * (1 + 1e-12):
        raise StripViolation(f"|Re lambda| = {abs(complex(lam).real)} exceeds alpha = {model.alpha}")
    n = model.n_states
    p = np.zeros((n, n), dtype=complex)
    for i, j in model.active_pairs():
        p[i, j] = model.kernel.rows[i, j] * step_laplace_deriv(model.law(i, j), lam, deriv)
    return p


def transfer(model: SemiMarkovModel, lam: complex) -> TransferMatrix:
    """The matrix P(lam)_{ij} = p_{ij} * E[e^{lam Y} | i -> j]."""
    return TransferMatrix(lam=complex(lam), entries=transfer_entries(model, lam))


# ---------------------------------------------------------------------------
# dominant eigen-triple
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerronTriple:
    lam: complex
    k: complex
    e_vec: np.ndarray
    nu_vec: np.ndarray
    projector: np.ndarray
    remainder: np.ndarray
    gap: float          # relative modulus gap between the top two eigenvalues
    radius_remainder: float  # spectral radius of R(lam)


def _realify(x, lam):
    if np.iscomplexobj(x) and abs(complex(lam).imag) == 0.0:
        if np.max(np.abs(np.atleast_1d(np.imag(x)))) < 1e-12 * max(1.0, float(np.max(np.abs(np.atleast_1d(x))))):
            return np.real(x) if isinstance(x, np.ndarray) else complex(x).real
    return x


def perron(model: SemiMarkovModel, lam: complex) -> PerronTriple:
    """Dominant eigen-triple of P(lam), normalized so sum(nu) = 1, nu^t e = 1.

    Raises EigenvalueCollision when the top two eigenvalue moduli are within
    the gap tolerance (the perturbation regime is lost there).
    """
    p = transfer_entries(model, lam)
    n = p.shape[0]
    if n == 1:
        k = complex(p[0, 0])
        e = np.ones(1, dtype=complex)
        nu = np.ones(1, dtype=complex)
        pi = np.ones((1, 1), dtype=complex)
        r = np.zeros((1, 1), dtype=complex)
        return PerronTriple(complex(lam), _realify(k, lam), _realify(e, lam),
                            _realify(nu, lam), _realify(pi, lam), _realify(r, lam),
                            gap=np.inf, radius_remainder=0.0)
    w, vl, vr = scipy.linalg.eig(p, left=True, right=True)
    order = np.argsort(-np.abs(w))
    i0, i1 = order[0], order[1]
    gap = (abs(w[i0]) - abs(w[i1])) / max(abs(w[i0]), 1e-300)
    if gap < GAP_TOL:
        raise EigenvalueCollision(
            f"top eigenvalue moduli {abs(w[i0])} and {abs(w[i1])} too close at lambda={lam}"
        )
    k = w[i0]
    e_raw = vr[:, i0]
    # pre-fix the phase so the normalizations below act on a stable vector
    nz = np.nonzero(np.abs(e_raw) > 1e-14)[0][0]
    e_raw = e_raw * (np.abs(e_raw[nz]) / e_raw[nz])
    nu_raw = vl[:, i0].conj()
    s = nu_raw.sum()
    if abs(s) < 1e-14:
        raise EigenvalueCollision(f"left eigenvector has vanishing sum at lambda={lam}")
    nu = nu_raw / s
    denom = nu @ e_raw
    if abs(denom) < 1e-14:
        raise EigenvalueCollision(f"nu^t e vanishes at lambda={lam}")
    e = e_raw / denom
    pi = np.outer(e, nu)
    r = p - k * pi
    rad = float(np.max(np.abs(np.linalg.eigvals(r))))
    return PerronTriple(
        complex(lam),
        _realify(k, lam),
        _realify(e, lam),
        _realify(nu, lam),
        _realify(pi, lam),
        _realify(r, lam),
        gap=float(gap),
        radius_remainder=rad,
    )


def k_value(model: SemiMarkovModel, lam: complex) -> complex:
    return perron(model, lam).k


def k_prime(model: SemiMarkovModel, lam: complex) -> complex:
    """Analytic first derivative of k via first-order perturbation:
    k'(lam) = nu(lam)^t P'(lam) e(lam) with nu^t e = 1."""
    t = perron(model, lam)
    pprime = transfer_entries(model, lam, deriv=1)
    return complex(np.asarray(t.nu_vec, dtype=complex) @ pprime @ np.asarray(t.e_vec, dtype=complex))


def k_derivatives_fd(model: SemiMarkovModel, h: float = FD_STEP):
    """(k''(0), k'''(0)) from central differences on a 5-point stencil."""
    ks = {m: float(np.real(k_value(model, m * h))) for m in (-2, -1, 0, 1, 2)}
    k2 = (-ks[2] + 16 * ks[1] - 30 * ks[0] + 16 * ks[-1] - ks[-2]) / (12 * h * h)
    k3 = (ks[2] - 2 * ks[1] + 2 * ks[-1] - ks[-2]) / (2 * h ** 3)
    return k2, k3


# ---------------------------------------------------------------------------
# resolvent identity check
# ---------------------------------------------------------------------------

def resolvent_check(model: SemiMarkovModel, z: complex, lam: complex,
                    tol: float = 1e-12) -> float:
    """Residual of (I - z P)^{-1} = zk/(1-zk) Pi + sum_n z^n R^n.

    The Neumann sum is truncated once its geometric tail bound drops below
    ``tol``.  Raises PoleHit near z k(lambda) = 1.
    """
    t = perron(model, lam)
    p = transfer_entries(model, lam)
    n = p.shape[0]
    zk = z * complex(t.k)
    if abs(1 - zk) < POLE_TOL:
        raise PoleHit(f"z k(lambda) = {zk} too close to 1")
    if abs(z) * t.radius_remainder >= 1.0:
        raise OutOfDomain(f"|z| r(R) = {abs(z) * t.radius_remainder} >= 1")
    direct = np.linalg.inv(np.eye(n) - z * p)
    acc = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    zr = z * np.asarray(t.remainder, dtype=complex)
    contraction = max(abs(z) * t.radius_remainder, 1e-6)
    for _ in range(10000):
        term = term @ zr
        acc += term
        tn = np.max(np.abs(term))
        if tn / max(1e-300, 1 - contraction) < tol:
            break
    else:
        raise OutOfDomain("Neumann series did not reach the tail tolerance")
    model_side = zk / (1 - zk) * np.asarray(t.projector, dtype=complex) + acc
    return float(np.max(np.abs(direct - model_side)))


# ---------------------------------------------------------------------------
# centering (a-equivalence) and variance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CenteringResult:
    gamma: float
    v: np.ndarray
    u_tilde: np.ndarray
    centered: SemiMarkovModel


def center(model: SemiMarkovModel) -> CenteringResult:
    """Solve (I - P) u = M(F)e - gamma e with nu^t u = 0 and shift each step
    law by u_j - u_i, producing an a-equivalent model with constant row means.

    Lattice laws whose shifts are off-lattice are re-expressed on the common
    refinement span when one exists (ShiftOffLattice otherwise).
    """
    rep = validate(model)
    nu = rep.stationary
    n = model.n_states
    ones = np.ones(n)
    p0 = model.kernel.rows
    v = mean_matrix(model) @ ones - rep.drift * ones
    pi0 = np.outer(ones, nu)
    u = np.linalg.solve(np.eye(n) - p0 + pi0, v)
    u = u - float(nu @ u) * ones  # exact re-projection against roundoff

    shifts = {(i, j): u[j] - u[i] for i, j in model.active_pairs()}
    refine = 1
    if model.is_lattice():
        span = model.span
        off = [s for s in shifts.values() if abs(s / span - round(s / span)) > 1e-9]
        if off:
            refine = common_refinement_factor(span, list(shifts.values()))
    new_steps = [[None] * n for _ in range(n)]
    for i, j in model.active_pairs():
        law = model.law(i, j)
        if refine > 1 and isinstance(law, Lattice):
            law = refine_lattice(law, refine)
        new_steps[i][j] = shift_law(law, shifts[(i, j)])
    centered = SemiMarkovModel(
        kernel=model.kernel,
        steps=tuple(tuple(r) for r in new_steps),
        moment_window=model.moment_window,
        spread_out=model.spread_out,
        name=(model.name + ":centered") if model.name else "centered",
    )
    return CenteringResult(gamma=rep.drift, v=v, u_tilde=u, centered=centered)


@dataclass(frozen=True)
class VarianceReport:
    sigma2: float
    sigma2_fd: float
    k3: float
    alpha1: float
    alpha2: float


def variance(model: SemiMarkovModel, degenerate_tol: float = 1e-10) -> VarianceReport:
    """sigma^2 = k''(0) via the centered second-moment formula, cross-checked
    against finite differences; also the root-expansion constants
    alpha1 = sqrt(2/sigma^2), alpha2 = -k'''(0) / (3 sigma^4)."""
    cen = center(model)
    rep = validate(model)
    sigma2 = float(rep.stationary @ second_moment_matrix(cen.centered).sum(axis=1))
    k2_fd, k3_fd = k_derivatives_fd(model)
    if sigma2 <= degenerate_tol:
        raise DegenerateVariance(
            f"sigma^2 = {sigma2} <= {degenerate_tol}: steps are a deterministic cocycle"
        )
    return VarianceReport(
        sigma2=sigma2,
        sigma2_fd=k2_fd,
        k3=k3_fd,
        alpha1=float(np.sqrt(2.0 / sigma2)),
        alpha2=float(-k3_fd / (3.0 * sigma2 ** 2)),
    )


# ---------------------------------------------------------------------------
# the root equation z k(lambda) = 1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RootPair:
    z: complex
    lambda_plus: complex
    lambda_minus: complex
    beta_plus: complex
    beta_minus: complex
    pi_plus: np.ndarray
    pi_minus: np.ndarray
    q: float
    double_root: bool = False


def working_alpha(model: SemiMarkovModel) -> float:
    """Largest strip half-width <= alpha on which the dominant pair stays
    simple at the real endpoints (halved until the gap condition holds)."""
    a = model.alpha
    for _ in range(40):
        try:
            perron(model, a)
            perron(model, -a)
            return a
        except EigenvalueCollision:
            a = a / 2
    raise EigenvalueCollision("no usable strip width found")


def q_left_end(model: SemiMarkovModel, alpha0: float | None = None) -> float:
    """q = 1 / min(k(-alpha0), k(alpha0)): left end of the real z-interval."""
    a = working_alpha(model) if alpha0 is None else alpha0
    km = float(np.real(k_value(model, -a)))
    kp = float(np.real(k_value(model, a)))
    return 1.0 / min(km, kp)


def _newton_root(model, z, seed, alpha0, tol=1e-13, maxit=80):
    lam = complex(seed)
    for _ in range(maxit):
        g = z * k_value(model, lam) - 1.0
        if abs(g) < tol:
            return lam
        gp = z * k_prime(model, lam)
        if gp == 0:
            break
        step = g / gp
        lam = lam - step
        if abs(lam.real) > alpha0 * 1.5:
            return None
    g = z * k_value(model, lam) - 1.0
    return lam if abs(g) < 1e-10 else None


def _bisect_root(model, z, lo, hi, tol=1e-14):
    g = lambda lam: float(np.real(z * k_value(model, lam))) - 1.0
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        raise OutOfDomain(f"no sign change on [{lo}, {hi}] at z = {z}")
    return float(scipy.optimize.brentq(g, lo, hi, xtol=tol))


def solve_roots(model: SemiMarkovModel, z: complex) -> RootPair:
    """Both roots lambda_pm(z) of z k(lambda) = 1 with beta_pm = z k'(lambda_pm).

    Real z must lie in (q, 1]; complex z is reached by Newton continuation
    seeded from the square-root expansion (1 - z taken off the cut [1, inf)).
    """
    alpha0 = working_alpha(model)
    q = q_left_end(model, alpha0)
    z = complex(z)
    is_real = z.imag == 0.0
    if is_real and not (q < z.real <= 1.0 + 1e-15):
        raise OutOfDomain(f"real z = {z.real} outside (q, 1] with q = {q}")
    if not is_real and (z.real >= 1.0 and abs(z.imag) < 1e-15):
        raise OutOfDomain("1 - z on the branch cut [1, inf)")
    if abs(z - 1.0) < 1e-15:
        t0 = perron(model, 0.0)
        pi0 = np.asarray(t0.projector)
        return RootPair(z=z, lambda_plus=0.0, lambda_minus=0.0,
                        beta_plus=0.0, beta_minus=0.0,
                        pi_plus=pi0, pi_minus=pi0, q=q, double_root=True)

    k2, k3 = k_derivatives_fd(model)
    if k2 <= 1e-10:
        raise DegenerateVariance("k''(0) vanishes; no square-root roots")
    a1 = np.sqrt(2.0 / k2)
    a2 = -k3 / (3.0 * k2 ** 2)
    sq = np.sqrt(1.0 - z) if not is_real else np.sqrt(1.0 - z.real)
    seeds = {+1: a1 * sq + a2 * (1.0 - z), -1: -a1 * sq + a2 * (1.0 - z)}

    roots = {}
    for sign in (+1, -1):
        lam = _newton_root(model, z, seeds[sign], alpha0)
        if lam is None and is_real:
            lo, hi = (0.0, alpha0) if sign > 0 else (-alpha0, 0.0)
            lam = _bisect_root(model, z.real, lo, hi)
        if lam is None:
            raise OutOfDomain(f"continuation failed for z = {z} on branch {sign:+d}")
        if is_real:
            lam = complex(float(np.real(lam)), 0.0)
        roots[sign] = lam
    lam_p, lam_m = roots[+1], roots[-1]
    if is_real and not (lam_m.real <= 1e-9 <= lam_p.real + 2e-9):
        raise OutOfDomain(f"roots {lam_m}, {lam_p} not straddling 0 at z = {z}")
    bp = z * k_prime(model, lam_p)
    bm = z * k_prime(model, lam_m)
    if is_real:
        lam_p, lam_m, bp, bm = lam_p.real, lam_m.real, bp.real, bm.real
    return RootPair(
        z=z,
        lambda_plus=lam_p,
        lambda_minus=lam_m,
        beta_plus=bp,
        beta_minus=bm,
        pi_plus=np.asarray(perron(model, lam_p).projector),
        pi_minus=np.asarray(perron(model, lam_m).projector),
        q=q,
    )


def expansion_residual(model: SemiMarkovModel, z_list) -> list:
    """|lambda_plus(z) - alpha1 sqrt(1-z) - alpha2 (1-z)| per z.

    The fitted log-log exponent of these residuals against (1 - z) should be
    >= 1.45 (the expansion is accurate to O((1-z)^{3/2}))."""
    var = variance(model)
    out = []
    for z in z_list:
        z = float(z)
        if not (0 < z <= 1.0):
            raise OutOfDomain(f"z = {z} not in (0, 1]")
        if z == 1.0:
            out.append(0.0)
            continue
        rp = solve_roots(model, z)
        pred = var.alpha1 * np.sqrt(1.0 - z) + var.alpha2 * (1.0 - z)
        out.append(float(abs(rp.lambda_plus - pred)))
    return out


# ---------------------------------------------------------------------------
# spectral-radius scan off the real axis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadiusScanReport:
    grid: list           # [(lambda, r(P(lambda)))]
    chi: float | None    # max radius over the scanned region (None if empty)
    band: dict
    peaks: list          # [(lambda, r)] refined local maxima with r ~ 1


def radius_scan(model: SemiMarkovModel, re_band, im_range, grid_steps) -> RadiusScanReport:
    """Scan r(P(re + i im)) on a rectangle.

    Spread-out models should show chi < 1 off the real axis; lattice models
    instead show exact r = 1 peaks repeating with period 2 pi / span in the
    imaginary direction, which are located and refined rather than asserted
    away.
    """
    re_lo, re_hi = float(re_band[0]), float(re_band[1])
    im_lo, im_hi = float(im_range[0]), float(im_range[1])
    n_re, n_im = (grid_steps if isinstance(grid_steps, (tuple, list)) else (1, int(grid_steps)))
    band = {"re": (re_lo, re_hi), "im": (im_lo, im_hi), "steps": (n_re, n_im)}
    if max(abs(re_lo), abs(re_hi)) > model.alpha:
        raise StripViolation("scan band wider than the moment window")
    if n_im <= 0 or im_hi < im_lo:
        return RadiusScanReport(grid=[], chi=None, band=band, peaks=[])
    res = np.linspace(re_lo, re_hi, max(n_re, 1))
    ims = np.linspace(im_lo, im_hi, n_im)

    def rad(s, t):
        return float(np.max(np.abs(np.linalg.eigvals(transfer_entries(model, complex(s, t))))))

    grid = []
    peaks = []
    for s in res:
        vals = np.array([rad(s, t) for t in ims])
        grid.extend((complex(s, t), float(r)) for t, r in zip(ims, vals))
        # refine interior local maxima that graze r = 1
        for k in range(1, n_im - 1):
            if vals[k] >= vals[k - 1] and vals[k] >= vals[k + 1] and vals[k] > 0.99:
                opt = scipy.optimize.minimize_scalar(
                    lambda t: -rad(s, t), bounds=(ims[k - 1], ims[k + 1]), method="bounded",
                    options={"xatol": 1e-10},
                )
                r_pk = -float(opt.fun)
                if r_pk >= 1.0 - 1e-6:
                    peaks.append((complex(s, float(opt.x)), r_pk))
    chi = max(r for _, r in grid)
    return RadiusScanReport(grid=grid, chi=chi, band=band, peaks=peaks)


# ---------------------------------------------------------------------------
# contour identities
# ---------------------------------------------------------------------------

def _quad_part(f, w: float, kind: str) -> float:
    """integral_0^inf f(t) * {cos|sin}(w t) dt by QUADPACK's Fourier rule."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.integrate.IntegrationWarning)
        try:
            if w == 0.0:
                if kind == "sin":
                    return 0.0
                val, err = scipy.integrate.quad(f, 0.0, np.inf, limit=400)
            else:
                val, err = scipy.integrate.quad(
                    f, 0.0, np.inf, weight=kind, wvar=w, limlst=200, limit=400
                )
        except (scipy.integrate.IntegrationWarning, Exception) as exc:  # noqa: BLE001
            raise QuadratureNonConvergence(str(exc)) from exc
    if err > 1e-7:
        raise QuadratureNonConvergence(f"quadrature error estimate {err} too large")
    return float(val)


def _fourier_line_integral(g, x: float) -> complex:
    """integral_R g(theta) e^{i x theta} dtheta for g decaying at infinity.

    Folds onto [0, inf): c_c = g(t) + g(-t) against cos(|x| t) and
    c_s = i sign(x) (g(t) - g(-t)) against sin(|x| t).
    """
    w = abs(x)
    sgn = np.sign(x)

    def cc(t):
        return g(t) + g(-t)

    def cs(t):
        return 1j * sgn * (g(t) - g(-t))

    total = 0.0 + 0.0j
    for fn, kind in ((cc, "cos"), (cs, "sin")):
        total += _quad_part(lambda t: float(np.real(fn(t))), w, kind)
        total += 1j * _quad_part(lambda t: float(np.imag(fn(t))), w, kind)
    return total


def contour_identities(a: complex, b: complex, x: float):
    """Numerically reproduce the two contour integrals behind the tail bounds.

    I1 = integral e^{i x t} / ((i t - a)(i t - b)) dt   (0 for x >= 0),
    I2 = integral e^{i x t} / (a + i t) dt = pi e^{-a x} (1 + sgn x).

    Returns (I1, I2, err) where err is the max deviation from the closed
    forms; requires Re a > 0, Re b > 0, a != b.
    """
    a, b = complex(a), complex(b)
    if a == b:
        raise ValueError("contour identity needs a != b")
    if a.real <= 0 or b.real <= 0:
        raise OutOfDomain("poles must satisfy Re a > 0 and Re b > 0")
    x = float(x)

    i1 = _fourier_line_integral(lambda t: 1.0 / ((1j * t - a) * (1j * t - b)), x)
    i2 = _fourier_line_integral(lambda t: 1.0 / (a + 1j * t), x)

    if x >= 0:
        closed1 = 0.0 + 0.0j
    else:
        closed1 = 2 * np.pi * (np.exp(b * x) - np.exp(a * x)) / (a - b)
    closed2 = np.pi * np.exp(-a * x) * (1.0 + np.sign(x))
    err = max(abs(i1 - closed1), abs(i2 - closed2))
    return i1, i2, float(err)
