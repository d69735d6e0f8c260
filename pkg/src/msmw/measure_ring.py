"""Matrices of finitely supported lattice measures and z-series over them.

The ring multiplication is "matrix product over convolution": for matrices
B, C of measures, (B . C)_{ij} = sum_k B_{ik} * C_{kj} with * the measure
convolution.  Truncated power series in z with these matrices as
coefficients carry the Wiener-Hopf factor algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SpanMismatch
from .model import SemiMarkovModel, lattice_view

SPAN_RTOL = 1e-9


def _same_span(a: float, b: float) -> bool:
    return abs(a - b) <= SPAN_RTOL * max(a, b)


@dataclass(frozen=True)
class LatticeMeasure:
    """Signed measure with finite support on span * (min_index + k).

    coeffs[k] is the mass at span * (min_index + k).  Canonically trimmed:
    leading and trailing coefficients are nonzero, and the zero measure is
    the unique instance with empty coeffs.
    """

    span: float
    min_index: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        # canonical trimming: exact zeros only, never small masses
        nz = np.nonzero(c)[0]
        if nz.size == 0:
            c = np.empty(0)
            object.__setattr__(self, "min_index", 0)
        else:
            lo, hi = nz[0], nz[-1]
            object.__setattr__(self, "min_index", self.min_index + int(lo))
            c = c[lo:hi + 1].copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @staticmethod
    def zero(span: float) -> "LatticeMeasure":
        return LatticeMeasure(span, 0, np.empty(0))

    @staticmethod
    def dirac(span: float, index: int, mass: float = 1.0) -> "LatticeMeasure":
        return LatticeMeasure(span, index, np.array([mass], dtype=float))

    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    @property
    def support(self) -> np.ndarray:
        return self.span * (self.min_index + np.arange(self.coeffs.size))

    def total(self) -> float:
        return float(self.coeffs.sum())

    def tv(self) -> float:
        """Total-variation norm."""
        return float(np.abs(self.coeffs).sum())

    def __add__(self, other: "LatticeMeasure") -> "LatticeMeasure":
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        if not _same_span(self.span, other.span):
            raise SpanMismatch(f"spans {self.span} vs {other.span}")
        lo = min(self.min_index, other.min_index)
        hi = max(self.min_index + self.coeffs.size, other.min_index + other.coeffs.size)
        out = np.zeros(hi - lo)
        out[self.min_index - lo: self.min_index - lo + self.coeffs.size] += self.coeffs
        out[other.min_index - lo: other.min_index - lo + other.coeffs.size] += other.coeffs
        return LatticeMeasure(self.span, lo, out)

    def __neg__(self) -> "LatticeMeasure":
        return LatticeMeasure(self.span, self.min_index, -self.coeffs)

    def __sub__(self, other: "LatticeMeasure") -> "LatticeMeasure":
        return self + (-other)

    def scale(self, c: float) -> "LatticeMeasure":
        if c == 0 or self.is_zero():
            return LatticeMeasure.zero(self.span)
        return LatticeMeasure(self.span, self.min_index, c * self.coeffs)

    def convolve(self, other: "LatticeMeasure") -> "LatticeMeasure":
        if self.is_zero() or other.is_zero():
            return LatticeMeasure.zero(self.span)
        if not _same_span(self.span, other.span):
            raise SpanMismatch(f"spans {self.span} vs {other.span}")
        return LatticeMeasure(
            self.span,
            self.min_index + other.min_index,
            np.convolve(self.coeffs, other.coeffs),
        )

    def restrict(self, half: str) -> "LatticeMeasure":
        """Restrict support: 'N' -> (-inf,0], 'N*' -> (-inf,0),
        'P' -> [0,inf), 'P*' -> (0,inf).  The atom at exactly 0 is decided
        by integer index comparison, never by floating tests."""
        if self.is_zero():
            return self
        idx = self.min_index + np.arange(self.coeffs.size)
        if half == "N":
            keep = idx <= 0
        elif half == "N*":
            keep = idx < 0
        elif half == "P":
            keep = idx >= 0
        elif half == "P*":
            keep = idx > 0
        else:
            raise ValueError(f"unknown half-line tag {half!r}")
        return LatticeMeasure(self.span, self.min_index, np.where(keep, self.coeffs, 0.0))

    def laplace(self, lam: complex) -> complex:
        if self.is_zero():
            return 0.0 + 0.0j
        return complex(np.sum(self.coeffs * np.exp(lam * self.support)))


def convolve(mu: LatticeMeasure, nu: LatticeMeasure) -> LatticeMeasure:
    """Convolution of two lattice measures (module-level spelling)."""
    return mu.convolve(nu)


@dataclass(frozen=True)
class MeasureMatrix:
    """N x N matrix of lattice measures with a common span."""

    span: float
    entries: tuple  # N x N nested tuple of LatticeMeasure

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.entries)
        for r in rows:
            for m in r:
                if not m.is_zero() and not _same_span(m.span, self.span):
                    raise SpanMismatch("entry span differs from matrix span")
        object.__setattr__(self, "entries", rows)

    @property
    def n(self) -> int:
        return len(self.entries)

    @staticmethod
    def zero(n: int, span: float) -> "MeasureMatrix":
        z = LatticeMeasure.zero(span)
        return MeasureMatrix(span, tuple(tuple(z for _ in range(n)) for _ in range(n)))

    @staticmethod
    def identity(n: int, span: float) -> "MeasureMatrix":
        z = LatticeMeasure.zero(span)
        d = LatticeMeasure.dirac(span, 0)
        return MeasureMatrix(
            span, tuple(tuple(d if i == j else z for j in range(n)) for i in range(n))
        )

    def __add__(self, other: "MeasureMatrix") -> "MeasureMatrix":
        self._check_compatible(other)
        return MeasureMatrix(self.span, tuple(
            tuple(a + b for a, b in zip(ra, rb))
            for ra, rb in zip(self.entries, other.entries)
        ))

    def __sub__(self, other: "MeasureMatrix") -> "MeasureMatrix":
        self._check_compatible(other)
        return MeasureMatrix(self.span, tuple(
            tuple(a - b for a, b in zip(ra, rb))
            for ra, rb in zip(self.entries, other.entries)
        ))

    def __neg__(self) -> "MeasureMatrix":
        return MeasureMatrix(self.span, tuple(tuple(-m for m in r) for r in self.entries))

    def scale(self, c: float) -> "MeasureMatrix":
        return MeasureMatrix(self.span, tuple(tuple(m.scale(c) for m in r) for r in self.entries))

    def _check_compatible(self, other: "MeasureMatrix"):
        if self.n != other.n:
            raise DimensionMismatch(f"sizes {self.n} vs {other.n}")
        if not _same_span(self.span, other.span):
            raise SpanMismatch(f"spans {self.span} vs {other.span}")

    def bullet(self, other: "MeasureMatrix") -> "MeasureMatrix":
        """Ring product: (B . C)_{ij} = sum_k B_{ik} * C_{kj}."""
        self._check_compatible(other)
        n = self.n
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = LatticeMeasure.zero(self.span)
                for k in range(n):
                    acc = acc + self.entries[i][k].convolve(other.entries[k][j])
                row.append(acc)
            out.append(tuple(row))
        return MeasureMatrix(self.span, tuple(out))

    def restrict(self, half: str) -> "MeasureMatrix":
        return MeasureMatrix(self.span, tuple(
            tuple(m.restrict(half) for m in r) for r in self.entries
        ))

    def laplace_eval(self, lam: complex) -> np.ndarray:
        n = self.n
        out = np.zeros((n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                out[i, j] = self.entries[i][j].laplace(lam)
        return out

    def total(self) -> np.ndarray:
        """Matrix of total masses."""
        n = self.n
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = self.entries[i][j].total()
        return out

    def tv(self) -> float:
        """Max-entry total-variation norm."""
        return max(m.tv() for r in self.entries for m in r)

    def transpose(self) -> "MeasureMatrix":
        n = self.n
        return MeasureMatrix(self.span, tuple(
            tuple(self.entries[j][i] for j in range(n)) for i in range(n)
        ))

    def conjugate_by_diagonal(self, d: np.ndarray) -> "MeasureMatrix":
        """Entrywise scale by d_j / d_i, i.e. D^{-1} B D for D = diag(d)."""
        n = self.n
        return MeasureMatrix(self.span, tuple(
            tuple(self.entries[i][j].scale(d[j] / d[i]) for j in range(n))
            for i in range(n)
        ))


def bullet(b: MeasureMatrix, c: MeasureMatrix) -> MeasureMatrix:
    return b.bullet(c)


def laplace_eval(b: MeasureMatrix, lam: complex) -> np.ndarray:
    return b.laplace_eval(lam)


def restrict(b: MeasureMatrix, half: str) -> MeasureMatrix:
    return b.restrict(half)


def step_measure(model: SemiMarkovModel) -> MeasureMatrix:
    """The one-step matrix measure M(dx)_{ij} = p_{ij} F(i, j, dx)."""
    view = lattice_view(model)
    n = model.n_states
    z = LatticeMeasure.zero(view.span)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if (i, j) in view.moves:
                offs, w = view.moves[(i, j)]
                lo, hi = int(offs.min()), int(offs.max())
                c = np.zeros(hi - lo + 1)
                c[offs - lo] = w
                row.append(LatticeMeasure(view.span, lo, c))
            else:
                row.append(z)
        rows.append(tuple(row))
    return MeasureMatrix(view.span, tuple(rows))


@dataclass(frozen=True)
class ZSeries:
    """Truncated power series in z with MeasureMatrix coefficients."""

    coeffs: tuple  # coefficient of z^n at index n

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        if not self.coeffs:
            raise ValueError("a z-series needs at least the z^0 coefficient")

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def n(self) -> int:
        return self.coeffs[0].n

    @property
    def span(self) -> float:
        return self.coeffs[0].span

    @staticmethod
    def identity(n: int, span: float, order: int) -> "ZSeries":
        z = MeasureMatrix.zero(n, span)
        return ZSeries((MeasureMatrix.identity(n, span),) + (z,) * order)

    def __add__(self, other: "ZSeries") -> "ZSeries":
        t = min(self.order, other.order)
        return ZSeries(tuple(a + b for a, b in zip(self.coeffs[:t + 1], other.coeffs[:t + 1])))

    def __sub__(self, other: "ZSeries") -> "ZSeries":
        t = min(self.order, other.order)
        return ZSeries(tuple(a - b for a, b in zip(self.coeffs[:t + 1], other.coeffs[:t + 1])))

    def __neg__(self) -> "ZSeries":
        return ZSeries(tuple(-c for c in self.coeffs))

    def restrict(self, half: str) -> "ZSeries":
        return ZSeries(tuple(c.restrict(half) for c in self.coeffs))

    def mul(self, other: "ZSeries") -> "ZSeries":
        """Cauchy product, truncated to min(order_a, order_b)."""
        t = min(self.order, other.order)
        out = []
        for m in range(t + 1):
            acc = MeasureMatrix.zero(self.n, self.span)
            for p in range(m + 1):
                acc = acc + self.coeffs[p].bullet(other.coeffs[m - p])
            out.append(acc)
        return ZSeries(tuple(out))

    def laplace_eval(self, z: complex, lam: complex) -> np.ndarray:
        """Evaluate the truncated series at (z, lambda)."""
        acc = np.zeros((self.n, self.n), dtype=complex)
        zp = 1.0 + 0.0j
        for c in self.coeffs:
            acc += zp * c.laplace_eval(lam)
            zp *= z
        return acc

    def dump_rows(self):
        """Debug rows (n, i, j, x, mass) suitable for CSV emission."""
        rows = []
        for m, coeff in enumerate(self.coeffs):
            for i in range(coeff.n):
                for j in range(coeff.n):
                    meas = coeff.entries[i][j]
                    for x, mass in zip(meas.support, meas.coeffs):
                        rows.append((m, i, j, float(x), float(mass)))
        return rows


def series_mul(a: ZSeries, b: ZSeries) -> ZSeries:
    return a.mul(b)
