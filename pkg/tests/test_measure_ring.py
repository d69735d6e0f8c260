import itertools

import numpy as np
import pytest

from msmw.errors import SpanMismatch
from msmw.measure_ring import (
    LatticeMeasure,
    MeasureMatrix,
    ZSeries,
    bullet,
    convolve,
    laplace_eval,
    restrict,
    step_measure,
)


def dirac(idx, mass=1.0):
    return LatticeMeasure.dirac(1.0, idx, mass)


def srw_step():
    return LatticeMeasure(1.0, -1, np.array([0.5, 0.0, 0.5]))


def random_measure(rng, max_extent=3):
    lo = rng.integers(-max_extent, 1)
    n = rng.integers(1, max_extent + 2)
    return LatticeMeasure(1.0, int(lo), rng.uniform(-1, 1, int(n)))


def random_matrix(rng, n=2):
    return MeasureMatrix(1.0, tuple(
        tuple(random_measure(rng) for _ in range(n)) for _ in range(n)
    ))


class TestConvolve:
    def test_translation_inverse(self):
        assert convolve(dirac(1), dirac(-1)).coeffs == pytest.approx([1.0])
        assert convolve(dirac(1), dirac(-1)).min_index == 0

    def test_two_step_srw_law(self):
        out = convolve(srw_step(), srw_step())
        assert out.min_index == -2
        assert out.coeffs == pytest.approx([0.25, 0.0, 0.5, 0.0, 0.25])

    def test_zero_annihilates(self):
        z = LatticeMeasure.zero(1.0)
        assert convolve(srw_step(), z).is_zero()

    def test_mass_multiplies(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            a, b = random_measure(rng), random_measure(rng)
            out = convolve(a, b)
            assert out.total() == pytest.approx(a.total() * b.total(), abs=1e-14)

    def test_span_mismatch(self):
        with pytest.raises(SpanMismatch):
            convolve(dirac(1), LatticeMeasure.dirac(0.5, 1))


class TestBullet:
    def test_identity(self):
        rng = np.random.default_rng(1)
        b = random_matrix(rng)
        eye = MeasureMatrix.identity(2, 1.0)
        prod = bullet(eye, b)
        assert all(
            (prod.entries[i][j] - b.entries[i][j]).tv() < 1e-15
            for i in range(2) for j in range(2)
        )

    def test_srw_two_step(self, srw):
        m = step_measure(srw)
        m2 = bullet(m, m)
        assert m2.entries[0][0].coeffs == pytest.approx([0.25, 0.0, 0.5, 0.0, 0.25])

    def test_two_state_against_path_enumeration(self, two_state):
        m = step_measure(two_state)
        m2 = bullet(m, m)
        # brute force over (state path, step) pairs
        expect = {}
        p = two_state.kernel.rows
        for j1, j2 in itertools.product(range(2), range(2)):
            steps0 = two_state.law(0, j1).support
            w0 = two_state.law(0, j1).weights
            steps1 = two_state.law(j1, j2).support
            w1 = two_state.law(j1, j2).weights
            for (x0, a), (x1, b) in itertools.product(zip(steps0, w0), zip(steps1, w1)):
                key = (j2, x0 + x1)
                expect[key] = expect.get(key, 0.0) + p[0, j1] * a * p[j1, j2] * b
        for (j, x), mass in expect.items():
            meas = m2.entries[0][j]
            sel = np.isclose(meas.support, x)
            assert meas.coeffs[sel].sum() == pytest.approx(mass, abs=1e-14)

    def test_ring_axioms_random(self):
        rng = np.random.default_rng(2)
        for _ in range(8):
            a, b, c = (random_matrix(rng) for _ in range(3))
            assoc = bullet(bullet(a, b), c) - bullet(a, bullet(b, c))
            assert assoc.tv() < 1e-12
            distr = bullet(a, b + c) - (bullet(a, b) + bullet(a, c))
            assert distr.tv() < 1e-12


class TestLaplaceEval:
    def test_total_mass(self, srw):
        m = step_measure(srw)
        assert laplace_eval(m, 0.0)[0, 0] == pytest.approx(1.0)

    def test_matches_step_laplace(self, srw):
        from msmw.model import step_laplace

        m = step_measure(srw)
        assert laplace_eval(m, 1.0)[0, 0] == pytest.approx(
            complex(step_laplace(srw.law(0, 0), 1.0)), abs=1e-12)

    def test_zero_matrix(self):
        z = MeasureMatrix.zero(2, 1.0)
        assert np.all(laplace_eval(z, 0.3) == 0)

    def test_ring_homomorphism(self):
        rng = np.random.default_rng(3)
        for lam in (0.0, 0.5, -0.3 + 0.2j):
            a, b = random_matrix(rng), random_matrix(rng)
            lhs = laplace_eval(bullet(a, b), lam)
            rhs = laplace_eval(a, lam) @ laplace_eval(b, lam)
            assert np.max(np.abs(lhs - rhs)) < 1e-10


class TestRestrict:
    def test_support_split(self):
        out = srw_step().restrict("P")
        assert out.min_index == 1 and out.coeffs == pytest.approx([0.5])

    def test_boundary_atom_assignment(self):
        m = LatticeMeasure(1.0, -2, np.array([0.25, 0.0, 0.5, 0.0, 0.25]))
        nstar = m.restrict("N*")
        assert nstar.min_index == -2 and nstar.coeffs == pytest.approx([0.25])
        n = m.restrict("N")
        assert n.coeffs == pytest.approx([0.25, 0.0, 0.5])

    def test_partitions_exact(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            b = random_measure(rng)
            for pair in (("N", "P*"), ("N*", "P")):
                back = b.restrict(pair[0]) + b.restrict(pair[1])
                assert (back - b).tv() == 0.0

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        for half in ("N", "N*", "P", "P*"):
            b = random_measure(rng)
            once = b.restrict(half)
            assert (once.restrict(half) - once).tv() == 0.0


class TestZSeries:
    def test_difference_of_squares(self, srw):
        m = step_measure(srw)
        z = MeasureMatrix.zero(1, 1.0)
        plus = ZSeries((MeasureMatrix.identity(1, 1.0), m, z))
        minus = ZSeries((MeasureMatrix.identity(1, 1.0), -m, z))
        prod = plus.mul(minus)
        assert (prod.coeffs[0] - MeasureMatrix.identity(1, 1.0)).tv() == 0.0
        assert prod.coeffs[1].tv() == 0.0
        assert (prod.coeffs[2] + bullet(m, m)).tv() < 1e-15

    def test_identity_series(self):
        rng = np.random.default_rng(6)
        s = ZSeries(tuple(random_matrix(rng) for _ in range(4)))
        prod = ZSeries.identity(2, 1.0, 3).mul(s)
        for a, b in zip(prod.coeffs, s.coeffs):
            assert (a - b).tv() < 1e-15

    def test_truncation_cauchy_product(self):
        rng = np.random.default_rng(7)
        a = ZSeries(tuple(random_matrix(rng) for _ in range(4)))
        b = ZSeries(tuple(random_matrix(rng) for _ in range(4)))
        prod = a.mul(b)
        assert prod.order == 3
        hand = MeasureMatrix.zero(2, 1.0)
        for p in range(4):
            hand = hand + bullet(a.coeffs[p], b.coeffs[3 - p])
        assert (prod.coeffs[3] - hand).tv() < 1e-13
