"""Path simulation and statistically rigorous estimators.

Determinism contract: path c of a plan draws from a Philox stream keyed by
(seed, start_state, chunk index), chunks have a fixed size, and reductions
run in ascending chunk order — so results are bit-identical whatever the
worker count.  Workers only decide which chunks are simulated concurrently.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooNarrow, NotLattice, OutOfDomain
from .model import Gaussian, Lattice, SemiMarkovModel, Uniform, validate

CHUNK = 1 << 14


@dataclass(frozen=True)
class SimulationPlan:
    n: int
    paths: int
    seed: int
    lambdas: tuple = ()
    xs: tuple = ()
    start_state: int = 0

    def __post_init__(self):
        if self.paths < 100:
            raise OutOfDomain("need at least 100 paths")
        if self.n < 1:
            raise OutOfDomain("horizon must be >= 1")


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    paths: int

    def covers(self, truth: float, sigmas: float = 4.0) -> bool:
        return abs(self.value - truth) <= sigmas * max(self.stderr, 1e-300)


def _worker_count(requested: int | None) -> int:
    cap = os.environ.get("MSMW_THREADS")
    w = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        w = min(w, max(1, int(cap)))
    return max(1, w)


def _chunk_rng(seed: int, start_state: int, chunk: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64((start_state << 48) + chunk)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _samplers(model: SemiMarkovModel):
    """Per-transition inverse-CDF samplers (law, rng, size) -> increments."""
    samplers = {}
    for i, j in model.active_pairs():
        law = model.law(i, j)
        if isinstance(law, Lattice):
            cum = np.cumsum(law.weights)
            support = law.support

            def smp(rng, size, cum=cum, support=support):
                return support[np.searchsorted(cum, rng.random(size), side="right").clip(0, len(support) - 1)]
        elif isinstance(law, Gaussian):
            def smp(rng, size, law=law):
                return law.mean + np.sqrt(law.variance) * rng.standard_normal(size)
        elif isinstance(law, Uniform):
            def smp(rng, size, law=law):
                return law.a + (law.b - law.a) * rng.random(size)
        else:  # pragma: no cover
            raise TypeError(f"no sampler for {type(law).__name__}")
        samplers[(i, j)] = smp
    return samplers


def _simulate_chunk(model, n, size, rng, start_state, samplers, rowcum):
    states = np.full(size, start_state, dtype=np.int64)
    s = np.zeros(size)
    m = np.zeros(size)
    for _ in range(n):
        u = rng.random(size)
        nxt = (u[:, None] > rowcum[states]).sum(axis=1)
        y = np.zeros(size)
        for (i, j), smp in samplers.items():
            mask = (states == i) & (nxt == j)
            cnt = int(mask.sum())
            if cnt:
                y[mask] = smp(rng, cnt)
        s = s + y
        np.minimum(m, s, out=m)
        states = nxt
    return states, s, m


def simulate_paths(model: SemiMarkovModel, plan: SimulationPlan,
                   workers: int | None = None, start_state: int | None = None):
    """Terminal triples (X_n, S_n, m_n) for every path of the plan.

    Returns (states, sums, minima) arrays in path order; bit-identical for a
    given (seed, plan) no matter how many workers execute the chunks.
    """
    validate(model)
    start = plan.start_state if start_state is None else start_state
    rowcum = np.cumsum(model.kernel.rows, axis=1)
    samplers = _samplers(model)
    n_chunks = (plan.paths + CHUNK - 1) // CHUNK
    sizes = [min(CHUNK, plan.paths - c * CHUNK) for c in range(n_chunks)]

    def run(c):
        rng = _chunk_rng(plan.seed, start, c)
        return _simulate_chunk(model, plan.n, sizes[c], rng, start, samplers, rowcum)

    w = _worker_count(workers)
    if w == 1 or n_chunks == 1:
        parts = [run(c) for c in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=w) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    states = np.concatenate([p[0] for p in parts])
    sums = np.concatenate([p[1] for p in parts])
    minima = np.concatenate([p[2] for p in parts])
    return states, sums, minima


def _matrix_estimates(model, plan, weights_fn, workers=None) -> np.ndarray:
    """sqrt(n)-scaled estimator matrices: entry (i, j) aggregates
    weights_fn(m) * 1[X_n = j] over paths started at i.  Returns an object
    array of McEstimate."""
    nst = model.n_states
    out = np.empty((nst, nst), dtype=object)
    scale = np.sqrt(plan.n)
    for i in range(nst):
        states, _sums, minima = simulate_paths(model, plan, workers=workers, start_state=i)
        w = weights_fn(minima)
        for j in range(nst):
            vals = w * (states == j)
            mean = float(vals.mean())
            se = float(vals.std(ddof=1) / np.sqrt(plan.paths))
            out[i, j] = McEstimate(value=scale * mean, stderr=scale * se, paths=plan.paths)
    return out


def estimate_min_laplace(model: SemiMarkovModel, plan: SimulationPlan, lam: float,
                         workers: int | None = None) -> np.ndarray:
    """sqrt(n) E_i(e^{lam m_n}; X_n = j) with standard errors (lam >= 0)."""
    if lam < 0:
        raise OutOfDomain("needs lam >= 0")
    return _matrix_estimates(model, plan, lambda m: np.exp(lam * m), workers)


def estimate_min_cdf(model: SemiMarkovModel, plan: SimulationPlan, x: float,
                     workers: int | None = None) -> np.ndarray:
    """sqrt(n) P_i(m_n >= -x, X_n = j) with standard errors (x >= 0)."""
    if x < 0:
        raise OutOfDomain("needs x >= 0")
    return _matrix_estimates(model, plan, lambda m: (m >= -x - 1e-12).astype(float), workers)


@dataclass(frozen=True)
class HFunctionEstimate:
    n_used: int
    x_grid: tuple
    h_hat: dict = field(repr=False)  # (i, j, x) -> McEstimate


def h_function_estimate(model: SemiMarkovModel, plan: SimulationPlan,
                        workers: int | None = None) -> HFunctionEstimate:
    """Monte Carlo estimate of h(x) = lim sqrt(n) P_i(m_n >= -x, X_n = j)
    over the plan's x grid (drift to the limit is the caller's concern)."""
    if not plan.xs:
        raise OutOfDomain("plan has no x probes")
    nst = model.n_states
    h_hat = {}
    for i in range(nst):
        states, _sums, minima = simulate_paths(model, plan, workers=workers, start_state=i)
        scale = np.sqrt(plan.n)
        for x in plan.xs:
            ind = (minima >= -float(x) - 1e-12).astype(float)
            for j in range(nst):
                vals = ind * (states == j)
                h_hat[(i, j, float(x))] = McEstimate(
                    value=scale * float(vals.mean()),
                    stderr=scale * float(vals.std(ddof=1) / np.sqrt(plan.paths)),
                    paths=plan.paths,
                )
    return HFunctionEstimate(n_used=plan.n, x_grid=tuple(float(x) for x in plan.xs), h_hat=h_hat)


def clt_check(model: SemiMarkovModel, plan: SimulationPlan,
              workers: int | None = None) -> McEstimate:
    """Sample variance of S_n / sqrt(n) with a fourth-moment standard error;
    should cover sigma^2 = k''(0) for centered models."""
    _states, sums, _minima = simulate_paths(model, plan, workers=workers)
    v = sums / np.sqrt(plan.n)
    p = plan.paths
    s2 = float(v.var(ddof=1))
    m4 = float(np.mean((v - v.mean()) ** 4))
    se = float(np.sqrt(max(m4 - (p - 3) / (p - 1) * s2 ** 2, 0.0) / p))
    return McEstimate(value=s2, stderr=se, paths=p)


def harmonicity_residual(model: SemiMarkovModel, h_est: HFunctionEstimate) -> float:
    """Max relative defect of h(x, i) = E_i[h(x + Y_1, X_1)] on the grid.

    h is extended by 0 below zero (the boundary convention); lattice models
    only, and every x + y reachable in one step must stay on the grid.
    """
    if not model.is_lattice():
        raise NotLattice("harmonicity check needs a lattice model")
    span = model.span
    xs = sorted(h_est.x_grid)
    nst = model.n_states
    have = set()
    for x in xs:
        have.add(round(x / span))
    offs_all = set()
    for i, j in model.active_pairs():
        law = model.law(i, j)
        for k, w in enumerate(law.weights):
            if w > 0:
                offs_all.add(law.min_index + k)
    interior = [
        x for x in xs
        if all((round(x / span) + o) in have or (round(x / span) + o) < 0 for o in offs_all)
    ]
    if not interior:
        raise GridTooNarrow("no grid point has all one-step neighbours on the grid")

    def h_of(i, j, xk):
        if xk < 0:
            return 0.0
        return h_est.h_hat[(i, j, float(xk * span))].value

    worst = 0.0
    for x in interior:
        xk = round(x / span)
        for i in range(nst):
            for j in range(nst):
                lhs = h_of(i, j, xk)
                rhs = 0.0
                for (a, b) in model.active_pairs():
                    if a != i:
                        continue
                    law = model.law(a, b)
                    p = model.kernel.rows[a, b]
                    for k, w in enumerate(law.weights):
                        if w > 0:
                            rhs += p * w * h_of(b, j, xk + law.min_index + k)
                denom = max(abs(lhs), 1e-12)
                worst = max(worst, abs(lhs - rhs) / denom)
    return worst


def one_step_chisquare(model: SemiMarkovModel, seed: int, paths: int = 200_000) -> float:
    """Largest per-cell z-score of the empirical one-step law of a lattice
    model against p_{ij} * weights (a held-out sanity check on the sampler)."""
    if not model.is_lattice():
        raise NotLattice("chi-square check needs a lattice model")
    plan = SimulationPlan(n=1, paths=paths, seed=seed)
    worst = 0.0
    for i in range(model.n_states):
        states, sums, _ = simulate_paths(model, plan, start_state=i)
        for a, b in model.active_pairs():
            if a != i:
                continue
            law = model.law(a, b)
            p = model.kernel.rows[a, b]
            for k, w in enumerate(law.weights):
                if w <= 0:
                    continue
                x = law.span * (law.min_index + k)
                prob = p * w
                obs = float(np.sum((states == b) & (np.abs(sums - x) < 1e-9)))
                exp = paths * prob
                z = abs(obs - exp) / np.sqrt(exp * (1 - prob))
                worst = max(worst, z)
    return worst
