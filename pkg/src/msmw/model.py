"""Semi-Markov models: driving kernel, step laws, hypothesis checks.

A model is a finite irreducible aperiodic Markov chain together with one
step law per admissible transition.  The walk adds the step drawn from
F(i, j, .) whenever the chain moves i -> j, and every downstream module
(spectral calculus, factorization, path-space oracles) consumes the same
immutable model object.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import NotAperiodic, NotIrreducible, NotLattice, ShiftOffLattice, StripViolation

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
DRIFT_TOL = 1e-10


# ---------------------------------------------------------------------------
# step laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lattice:
    """Finitely supported law on the lattice span * (min_index + k).

    weights[k] is the mass at span * (min_index + k); weights sum to 1.
    """

    span: float
    min_index: int
    weights: tuple

    def __post_init__(self):
        if self.span <= 0:
            raise ValueError("lattice span must be positive")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w < 0):
            raise ValueError("lattice weights must be non-negative")
        if abs(w.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"lattice weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @property
    def support(self) -> np.ndarray:
        return self.span * (self.min_index + np.arange(len(self.weights)))


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("gaussian variance must be positive")


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("uniform law needs a < b")


StepLaw = Union[Lattice, Gaussian, Uniform]


def _uniform_moment(law: Uniform, m: int) -> float:
    # m-th raw moment of U(a, b): (b^{m+1} - a^{m+1}) / ((m+1)(b-a))
    return (law.b ** (m + 1) - law.a ** (m + 1)) / ((m + 1) * (law.b - law.a))


def step_mean(law: StepLaw) -> float:
    """First moment of a step law."""
    if isinstance(law, Lattice):
        return float(np.dot(law.support, law.weights))
    if isinstance(law, Gaussian):
        return law.mean
    return _uniform_moment(law, 1)


def step_second_moment(law: StepLaw) -> float:
    """Second raw moment of a step law."""
    if isinstance(law, Lattice):
        return float(np.dot(law.support ** 2, law.weights))
    if isinstance(law, Gaussian):
        return law.variance + law.mean ** 2
    return _uniform_moment(law, 2)


def shift_law(law: StepLaw, delta: float) -> StepLaw:
    """Convolve a step law with the Dirac mass at delta (a translation)."""
    if isinstance(law, Lattice):
        steps = delta / law.span
        k = round(steps)
        if abs(steps - k) > 1e-9:
            raise ValueError(f"shift {delta} is not a lattice multiple of span {law.span}")
        return Lattice(law.span, law.min_index + k, law.weights)
    if isinstance(law, Gaussian):
        return Gaussian(law.mean + delta, law.variance)
    return Uniform(law.a + delta, law.b + delta)


def refine_lattice(law: Lattice, factor: int) -> Lattice:
    """Re-express a lattice law on the finer lattice span / factor."""
    w = np.zeros(factor * (len(law.weights) - 1) + 1)
    w[::factor] = law.weights
    return Lattice(law.span / factor, law.min_index * factor, tuple(w))


def step_laplace(law: StepLaw, lam: complex, alpha: float | None = None) -> complex:
    """Laplace transform E[exp(lam * Y)] of a step law, by closed form.

    When ``alpha`` is given the argument must satisfy |Re lam| <= alpha.
    """
    if alpha is not None and abs(lam.real) > alpha * (1 + 1e-12):
        raise StripViolation(f"|Re lambda| = {abs(lam.real)} exceeds alpha = {alpha}")
    return _laplace_or_deriv(law, complex(lam), 0)


def step_laplace_deriv(law: StepLaw, lam: complex, order: int = 1) -> complex:
    """d^order/dlam^order of the step-law Laplace transform (closed form)."""
    return _laplace_or_deriv(law, complex(lam), order)


def _laplace_or_deriv(law: StepLaw, lam: complex, order: int) -> complex:
    if isinstance(law, Lattice):
        x = law.support
        return complex(np.sum(np.asarray(law.weights) * x ** order * np.exp(lam * x)))
    if isinstance(law, Gaussian):
        mu, v = law.mean, law.variance
        base = np.exp(lam * mu + 0.5 * v * lam * lam)
        if order == 0:
            return complex(base)
        if order == 1:
            return complex((mu + v * lam) * base)
        if order == 2:
            return complex(((mu + v * lam) ** 2 + v) * base)
        if order == 3:
            return complex(((mu + v * lam) ** 3 + 3 * v * (mu + v * lam)) * base)
        raise NotImplementedError("gaussian derivatives implemented to order 3")
    return _uniform_laplace_deriv(law, lam, order)


def _uniform_laplace_deriv(law: Uniform, lam: complex, order: int) -> complex:
    # F-hat(lam) = sum_m lam^m M_{m} / m! with M_m the raw moments, so the
    # k-th derivative is sum_m lam^m M_{m+k} / m!.  Near lam = 0 the closed
    # form (e^{lam b} - e^{lam a}) / (lam (b - a)) cancels badly; the moment
    # series is exact and converges fast there.
    scale = max(abs(law.a), abs(law.b))
    if abs(lam) * scale < 0.5:
        total = 0.0 + 0.0j
        term_pow = 1.0 + 0.0j  # lam^m / m!
        for m in range(0, 60):
            total += term_pow * _uniform_moment(law, m + order)
            # |M_{m+k}| <= scale^{m+k} bounds the tail even through zero
            # odd moments of symmetric laws
            if abs(term_pow) * scale ** (m + order) < 1e-18 * max(1.0, abs(total)):
                break
            term_pow = term_pow * lam / (m + 1)
        return total
    a, b = law.a, law.b
    width = b - a
    if order == 0:
        return (np.exp(lam * b) - np.exp(lam * a)) / (lam * width)
    # derivative of (e^{lam b} - e^{lam a})/(lam(b-a)) via the recursion
    # d/dlam [f] = (b e^{lam b} - a e^{lam a})/(lam(b-a)) - f/lam
    # The k-th derivative equals int x^k e^{lam x} dx / (b - a), computed by
    # repeated integration by parts.
    return _poly_exp_integral(order, lam, a, b) / width


def _poly_exp_integral(k: int, lam: complex, a: float, b: float) -> complex:
    # int_a^b x^k e^{lam x} dx for lam != 0, by the standard recursion.
    if k == 0:
        return (np.exp(lam * b) - np.exp(lam * a)) / lam
    return (b ** k * np.exp(lam * b) - a ** k * np.exp(lam * a)) / lam \
        - (k / lam) * _poly_exp_integral(k - 1, lam, a, b)


# ---------------------------------------------------------------------------
# driving kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkovKernel:
    """Transition matrix of the driving chain, validated on construction."""

    rows: np.ndarray

    def __post_init__(self):
        p = np.array(self.rows, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("kernel must be a square matrix")
        if np.any(p < 0):
            raise ValueError("kernel entries must be non-negative")
        bad = np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(f"row {i} sums to {p[i].sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "rows", p)

    @property
    def n_states(self) -> int:
        return self.rows.shape[0]

    def check_irreducible(self):
        """Raise NotIrreducible with an unreachable (i, j) witness."""
        n = self.n_states
        adj = self.rows > 0
        reach = np.eye(n, dtype=bool)
        for _ in range(n):
            reach = reach | (reach @ adj)
        if not reach.all():
            i, j = np.argwhere(~reach)[0]
            raise NotIrreducible((int(i), int(j)))

    def period(self) -> int:
        """Period of the (irreducible) chain via BFS level differences."""
        n = self.n_states
        level = -np.ones(n, dtype=int)
        level[0] = 0
        queue = [0]
        g = 0
        edges = []
        while queue:
            u = queue.pop()
            for v in np.nonzero(self.rows[u] > 0)[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(int(v))
                edges.append((u, int(v)))
        for u, v in edges:
            g = math.gcd(g, level[u] + 1 - level[v])
        return abs(g) if g != 0 else 1

    def check_aperiodic(self):
        d = self.period()
        if d != 1:
            raise NotAperiodic(d)

    def stationary(self) -> np.ndarray:
        """Invariant probability row vector nu with nu^t P = nu^t, sum 1."""
        n = self.n_states
        a = np.vstack([self.rows.T - np.eye(n), np.ones((1, n))])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        nu, *_ = np.linalg.lstsq(a, b, rcond=None)
        return nu


# ---------------------------------------------------------------------------
# the model object
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SemiMarkovModel:
    """Driving kernel + step laws + moment window.

    ``steps[i][j]`` must be a StepLaw whenever kernel.rows[i, j] > 0 (entries
    on zero-probability transitions may be None).  All lattice laws in one
    model must share the same span.
    """

    kernel: MarkovKernel
    steps: tuple  # N x N nested tuple of StepLaw | None
    moment_window: float = 1.0
    spread_out: bool = False
    name: str = field(default="", compare=False)

    def __post_init__(self):
        n = self.kernel.n_states
        steps = tuple(tuple(row) for row in self.steps)
        if len(steps) != n or any(len(r) != n for r in steps):
            raise ValueError("steps must be an N x N table")
        for i in range(n):
            for j in range(n):
                if self.kernel.rows[i, j] > 0 and steps[i][j] is None:
                    raise ValueError(f"missing step law on transition ({i}, {j})")
        if self.moment_window <= 0:
            raise ValueError("moment window alpha must be positive")
        spans = {law.span for row in steps for law in row if isinstance(law, Lattice)}
        if len(spans) > 1:
            raise ValueError(f"lattice laws must share one span, got {sorted(spans)}")
        object.__setattr__(self, "steps", steps)

    @property
    def n_states(self) -> int:
        return self.kernel.n_states

    @property
    def alpha(self) -> float:
        return self.moment_window

    def is_lattice(self) -> bool:
        return all(
            isinstance(law, Lattice)
            for i, row in enumerate(self.steps)
            for j, law in enumerate(row)
            if self.kernel.rows[i, j] > 0
        )

    @property
    def span(self) -> float:
        for i, row in enumerate(self.steps):
            for j, law in enumerate(row):
                if self.kernel.rows[i, j] > 0 and isinstance(law, Lattice):
                    return law.span
        raise NotLattice("model has no lattice steps")

    def law(self, i: int, j: int) -> StepLaw:
        return self.steps[i][j]

    def active_pairs(self):
        """Transitions (i, j) with positive kernel probability."""
        n = self.n_states
        return [(i, j) for i in range(n) for j in range(n) if self.kernel.rows[i, j] > 0]


@dataclass(frozen=True)
class HypothesisReport:
    irreducible: bool
    aperiodic: bool
    drift: float
    h3_satisfied: bool
    stationary: np.ndarray


def mean_matrix(model: SemiMarkovModel) -> np.ndarray:
    """M(F)_{i,j} = p_{i,j} * mean of F(i, j)."""
    n = model.n_states
    m = np.zeros((n, n))
    for i, j in model.active_pairs():
        m[i, j] = model.kernel.rows[i, j] * step_mean(model.law(i, j))
    return m


def second_moment_matrix(model: SemiMarkovModel) -> np.ndarray:
    """Sigma(F)_{i,j} = p_{i,j} * second raw moment of F(i, j)."""
    n = model.n_states
    m = np.zeros((n, n))
    for i, j in model.active_pairs():
        m[i, j] = model.kernel.rows[i, j] * step_second_moment(model.law(i, j))
    return m


def validate(model: SemiMarkovModel) -> HypothesisReport:
    """Check irreducibility/aperiodicity, compute nu and the drift.

    Raises NotIrreducible / NotAperiodic with a witness.  The drift is
    gamma = sum_ij nu_i p_ij mean(F(i,j)); H3 is flagged when |gamma| <= 1e-10.
    """
    model.kernel.check_irreducible()
    model.kernel.check_aperiodic()
    nu = model.kernel.stationary()
    gamma = float(nu @ mean_matrix(model).sum(axis=1))
    return HypothesisReport(
        irreducible=True,
        aperiodic=True,
        drift=gamma,
        h3_satisfied=abs(gamma) <= DRIFT_TOL,
        stationary=nu,
    )


# ---------------------------------------------------------------------------
# JSON model files
# ---------------------------------------------------------------------------
# {"states": N, "kernel": [[...]], "steps": {"i,j": {...}}, "alpha": a,
#  "spread_out": bool}; step objects carry a "type" tag.  Indices in files
# are 0-based.

def _law_to_json(law: StepLaw) -> dict:
    if isinstance(law, Lattice):
        return {
            "type": "lattice",
            "span": law.span,
            "min_index": law.min_index,
            "weights": list(law.weights),
        }
    if isinstance(law, Gaussian):
        return {"type": "gaussian", "mean": law.mean, "variance": law.variance}
    return {"type": "uniform", "a": law.a, "b": law.b}


def _law_from_json(obj: dict) -> StepLaw:
    kind = obj.get("type")
    if kind == "lattice":
        return Lattice(obj["span"], int(obj["min_index"]), tuple(obj["weights"]))
    if kind == "gaussian":
        return Gaussian(obj["mean"], obj["variance"])
    if kind == "uniform":
        return Uniform(obj["a"], obj["b"])
    raise ValueError(f"unknown step law type {kind!r}")


def model_to_json(model: SemiMarkovModel) -> dict:
    steps = {}
    for i, j in model.active_pairs():
        steps[f"{i},{j}"] = _law_to_json(model.law(i, j))
    return {
        "states": model.n_states,
        "kernel": model.kernel.rows.tolist(),
        "steps": steps,
        "alpha": model.moment_window,
        "spread_out": model.spread_out,
    }


def model_from_json(obj: dict, name: str = "") -> SemiMarkovModel:
    n = int(obj["states"])
    kernel = MarkovKernel(obj["kernel"])
    if kernel.n_states != n:
        raise ValueError(f"'states' is {n} but kernel is {kernel.n_states} x {kernel.n_states}")
    table = [[None] * n for _ in range(n)]
    for key, law_obj in obj.get("steps", {}).items():
        i_s, j_s = key.split(",")
        table[int(i_s)][int(j_s)] = _law_from_json(law_obj)
    return SemiMarkovModel(
        kernel=kernel,
        steps=tuple(tuple(r) for r in table),
        moment_window=float(obj.get("alpha", 1.0)),
        spread_out=bool(obj.get("spread_out", False)),
        name=name,
    )


def save_model(model: SemiMarkovModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> SemiMarkovModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh), name=str(path))


# ---------------------------------------------------------------------------
# integer lattice view used by the exact engines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeView:
    """Integer-offset view of a lattice model: moves[(i, j)] = (offsets, weights).

    Offsets are integers on the common span; weights include the kernel
    probability factor p_{i,j}.
    """

    span: float
    n_states: int
    moves: dict
    min_offset: int
    max_offset: int


def lattice_view(model: SemiMarkovModel) -> LatticeView:
    if not model.is_lattice():
        raise NotLattice("operation needs a pure lattice model with common span")
    span = model.span
    moves = {}
    lo, hi = 0, 0
    for i, j in model.active_pairs():
        law = model.law(i, j)
        w = np.asarray(law.weights)
        keep = w > 0
        offs = (law.min_index + np.nonzero(keep)[0]).astype(int)
        moves[(i, j)] = (offs, model.kernel.rows[i, j] * w[keep])
        lo = min(lo, int(offs.min()))
        hi = max(hi, int(offs.max()))
    return LatticeView(span=span, n_states=model.n_states, moves=moves,
                       min_offset=lo, max_offset=hi)


def iter_moves(model: SemiMarkovModel):
    """(view, moves) with moves = [(i, j, offsets, weights)] sorted by (i, j).

    Weights carry the kernel factor p_{i,j}; offsets are integers on the span.
    """
    view = lattice_view(model)
    moves = [(i, j, offs, w) for (i, j), (offs, w) in sorted(view.moves.items())]
    return view, moves


def common_refinement_factor(span: float, shifts) -> int:
    """Smallest d such that every shift is a multiple of span / d (d <= 64)."""
    best = 1
    for s in shifts:
        ratio = s / span
        frac = Fraction(ratio).limit_denominator(64)
        if abs(float(frac) - ratio) > 1e-9:
            raise ShiftOffLattice(f"shift {s} not commensurate with span {span}")
        best = best * frac.denominator // math.gcd(best, frac.denominator)
    if best > 64:
        raise ShiftOffLattice(f"refinement factor for span {span} exceeds 64")
    return best
