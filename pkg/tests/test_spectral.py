import numpy as np
import pytest

from msmw.errors import (
    DegenerateVariance,
    OutOfDomain,
    PoleHit,
    ShiftOffLattice,
    StripViolation,
)
from msmw.extrapolate import fit_power_exponent
from msmw.model import Gaussian, Lattice, MarkovKernel, SemiMarkovModel, validate
from msmw.spectral import (
    center,
    contour_identities,
    expansion_residual,
    k_value,
    perron,
    q_left_end,
    radius_scan,
    resolvent_check,
    solve_roots,
    transfer,
    variance,
    working_alpha,
)


class TestTransfer:
    def test_stochastic_at_zero(self, srw):
        assert transfer(srw, 0.0).entries[0, 0] == pytest.approx(1.0)

    def test_srw_cosh(self, srw):
        assert transfer(srw, 1.0).entries[0, 0] == pytest.approx(np.cosh(1.0), rel=1e-14)

    def test_two_state_hand_matrix(self, two_state):
        lam = 0.37
        p = transfer(two_state, lam).entries
        e = np.exp(lam)
        expect = np.array([[e / 2, e / 2], [1 / (2 * e), 1 / (2 * e)]])
        assert np.max(np.abs(p - expect)) < 1e-14

    def test_strip_enforced(self, srw):
        with pytest.raises(StripViolation):
            transfer(srw, 1.2)


class TestPerron:
    def test_scalar_trivial(self, srw):
        t = perron(srw, 0.0)
        assert t.k == pytest.approx(1.0)
        assert np.asarray(t.remainder) == pytest.approx(0.0)

    def test_two_state_cosh_eigenvalue(self, two_state):
        for lam in (-0.8, -0.2, 0.0, 0.5, 1.0):
            t = perron(two_state, lam)
            assert complex(t.k).real == pytest.approx(np.cosh(lam), rel=1e-12)

    def test_lambda_independent_steps(self):
        d0 = Lattice(1.0, 0, (1.0,))
        m = SemiMarkovModel(
            kernel=MarkovKernel([[0.5, 0.5], [0.5, 0.5]]),
            steps=((d0, d0), (d0, d0)), moment_window=6.0)
        t = perron(m, 5.0)
        assert complex(t.k).real == pytest.approx(1.0, abs=1e-12)
        assert np.asarray(t.projector) == pytest.approx(np.full((2, 2), 0.5), abs=1e-12)

    def test_normalizations_and_projector(self, lattice_battery):
        for m in lattice_battery:
            for lam in (-0.6, 0.1, 0.9):
                t = perron(m, lam)
                p = transfer(m, lam).entries
                e, nu = np.asarray(t.e_vec), np.asarray(t.nu_vec)
                assert np.max(np.abs(p @ e - t.k * e)) < 1e-10
                assert np.max(np.abs(nu @ p - t.k * nu)) < 1e-10
                assert complex(nu.sum()) == pytest.approx(1.0, abs=1e-10)
                assert complex(nu @ e) == pytest.approx(1.0, abs=1e-10)
                pi = np.asarray(t.projector)
                r = np.asarray(t.remainder)
                assert np.max(np.abs(pi @ pi - pi)) < 1e-10
                assert np.max(np.abs(pi @ r)) < 1e-10
                assert np.max(np.abs(r @ pi)) < 1e-10
                assert t.radius_remainder < abs(t.k)

    def test_iterated_split(self, lattice_battery):
        # P^n = k^n Pi + R^n for n <= 10
        for m in lattice_battery:
            t = perron(m, 0.4)
            p = transfer(m, 0.4).entries
            pn = np.eye(m.n_states)
            rn = np.eye(m.n_states)
            for n in range(1, 11):
                pn = pn @ p
                rn = rn @ np.asarray(t.remainder)
                model_side = t.k ** n * np.asarray(t.projector) + rn
                assert np.max(np.abs(pn - model_side)) < 1e-8


class TestResolvent:
    def test_scalar_geometric(self, srw):
        assert resolvent_check(srw, 0.5, 0.0) < 1e-10

    def test_two_state(self, two_state):
        assert resolvent_check(two_state, 0.9, 0.1) < 1e-10

    def test_pole_hit(self, srw):
        with pytest.raises(PoleHit):
            resolvent_check(srw, 1.0, 0.0)

    def test_random_admissible_points(self, lattice_battery):
        rng = np.random.default_rng(20)
        for m in lattice_battery:
            hits = 0
            while hits < 8:
                z = rng.uniform(0.1, 0.95) * np.exp(1j * rng.uniform(0, 2 * np.pi))
                lam = rng.uniform(-0.8, 0.8)
                t = perron(m, lam)
                if abs(z) * t.radius_remainder >= 0.98 or abs(1 - z * t.k) < 1e-3:
                    continue
                assert resolvent_check(m, z, lam) < 1e-10
                hits += 1


class TestCentering:
    def test_srw_trivial(self, srw):
        c = center(srw)
        assert c.u_tilde == pytest.approx([0.0])
        assert c.centered.law(0, 0) == srw.law(0, 0)

    def test_two_state_shifts(self, two_state):
        c = center(two_state)
        assert c.u_tilde == pytest.approx([1.0, -1.0], abs=1e-12)
        # shifted laws: Diracs at +1 / -1 in the pattern (i + j) parity
        assert c.centered.law(0, 0).support == pytest.approx([1.0])
        assert c.centered.law(0, 1).support == pytest.approx([-1.0])
        assert c.centered.law(1, 0).support == pytest.approx([1.0])
        assert c.centered.law(1, 1).support == pytest.approx([-1.0])

    def test_centered_row_means_constant(self, lattice_battery, drifted_model):
        from msmw.model import mean_matrix

        for m in lattice_battery + [drifted_model]:
            c = center(m)
            rep = validate(m)
            row_means = mean_matrix(c.centered).sum(axis=1)
            assert np.max(np.abs(row_means - c.gamma)) < 1e-10
            # (I - P) u = v and nu^t u = 0
            n = m.n_states
            lhs = (np.eye(n) - m.kernel.rows) @ c.u_tilde
            assert np.max(np.abs(lhs - c.v)) < 1e-10
            assert abs(rep.stationary @ c.u_tilde) < 1e-10

    def test_off_lattice_shift_refines_span(self, offlattice_shift_model):
        c = center(offlattice_shift_model)
        assert c.centered.span == pytest.approx(1.0 / 3.0)
        assert validate(c.centered).h3_satisfied

    def test_unrefinable_shift_raises(self):
        up = Lattice(1.0, 1, (1.0,))
        dn = Gaussian(-1.0, 1.0)
        m = SemiMarkovModel(
            kernel=MarkovKernel([[0.25, 0.75], [0.75, 0.25]]),
            steps=((up, up), (dn, dn)), moment_window=1.0)
        # shifts are 4/3 but the lattice rows cannot refine against pi-ish
        # shifts; force an incommensurate case via an irrational kernel
        k = (np.sqrt(2) - 1)  # p00 - p01 = 2k - 1 irrational
        m2 = SemiMarkovModel(
            kernel=MarkovKernel([[k, 1 - k], [1 - k, k]]),
            steps=((up, Lattice(1.0, -1, (1.0,))),
                   (up, Lattice(1.0, -1, (1.0,)))), moment_window=1.0)
        with pytest.raises(ShiftOffLattice):
            center(m2)
        del m


class TestVariance:
    def test_srw(self, srw):
        v = variance(srw)
        assert v.sigma2 == pytest.approx(1.0, abs=1e-14)
        assert v.alpha1 == pytest.approx(np.sqrt(2.0), rel=1e-12)
        assert v.alpha2 == pytest.approx(0.0, abs=1e-6)

    def test_two_state(self, two_state):
        assert variance(two_state).sigma2 == pytest.approx(1.0, abs=1e-12)

    def test_formula_vs_finite_difference(self, lattice_battery, gaussian_model,
                                          uniform_model):
        for m in lattice_battery + [gaussian_model, uniform_model]:
            v = variance(m)
            assert abs(v.sigma2 - v.sigma2_fd) <= 1e-6 * max(1.0, v.sigma2)

    def test_degenerate(self, dirac_model):
        with pytest.raises(DegenerateVariance):
            variance(dirac_model)


class TestRoots:
    def test_srw_arccosh(self, srw):
        for z in (0.7, 0.9, 0.99):
            rp = solve_roots(srw, z)
            assert abs(rp.lambda_plus - np.arccosh(1 / z)) < 1e-10
            assert abs(rp.lambda_minus + np.arccosh(1 / z)) < 1e-10
            assert abs(z * k_value(srw, rp.lambda_plus) - 1) < 1e-10

    def test_double_root_at_one(self, lattice_battery):
        for m in lattice_battery:
            rp = solve_roots(m, 1.0)
            assert rp.double_root
            assert rp.lambda_plus == 0 and rp.lambda_minus == 0
            assert rp.beta_plus == 0 and rp.beta_minus == 0

    def test_q_value(self, srw):
        assert q_left_end(srw) == pytest.approx(1 / np.cosh(1.0), rel=1e-12)
        assert working_alpha(srw) == pytest.approx(1.0)

    def test_out_of_domain(self, srw):
        with pytest.raises(OutOfDomain):
            solve_roots(srw, 0.5)  # below q ~ 0.648
        with pytest.raises(OutOfDomain):
            solve_roots(srw, 1.0 + 1e-6)

    def test_complex_continuation(self, srw):
        z = 0.9 + 0.05j
        rp = solve_roots(srw, z)
        assert abs(z * np.cosh(rp.lambda_plus) - 1) < 1e-10
        assert abs(z * np.cosh(rp.lambda_minus) - 1) < 1e-10
        assert rp.lambda_plus != rp.lambda_minus

    def test_monotone_in_z(self, lattice_battery):
        for m in lattice_battery:
            zs = [0.8, 0.9, 0.96, 0.99]
            lps = [solve_roots(m, z).lambda_plus.real if np.iscomplexobj(solve_roots(m, z).lambda_plus)
                   else float(np.real(solve_roots(m, z).lambda_plus)) for z in zs]
            lms = [float(np.real(solve_roots(m, z).lambda_minus)) for z in zs]
            assert all(a > b for a, b in zip(lps, lps[1:]))  # increasing in 1 - z
            assert all(a < b for a, b in zip(lms, lms[1:]))

    def test_expansion_residual_exponent(self, srw):
        zs = [1 - 10 ** (-e) for e in (2, 2.5, 3, 3.5, 4)]
        res = expansion_residual(srw, zs)
        exponent = fit_power_exponent([1 - z for z in zs], res)
        assert exponent >= 1.45
        # frozen oracle values from the arccosh expansion
        r4 = expansion_residual(srw, [1 - 1e-4])[0]
        assert r4 <= 1e-5
        r6 = expansion_residual(srw, [1 - 1e-6])[0]
        assert r6 <= 1e-8
        assert expansion_residual(srw, [1.0])[0] == 0.0


class TestSpectralFunctionProperties:
    def test_k_real_convex_min_one(self, lattice_battery):
        for m in lattice_battery:
            lams = np.linspace(-0.9, 0.9, 13)
            ks = np.array([float(np.real(k_value(m, l))) for l in lams])
            assert np.all(ks >= 1.0 - 1e-12)
            assert float(np.real(k_value(m, 0.0))) == pytest.approx(1.0, abs=1e-12)
            # discrete convexity
            assert np.all(ks[:-2] + ks[2:] - 2 * ks[1:-1] > -1e-10)

    def test_k_prime_zero_for_centered(self, lattice_battery):
        from msmw.spectral import k_prime

        for m in lattice_battery:
            assert abs(complex(k_prime(m, 0.0))) < 1e-8

    def test_a_equivalence_preserves_k(self, three_state, offlattice_shift_model):
        for m in (three_state, offlattice_shift_model):
            c = center(m)
            for lam in np.linspace(-0.5, 0.5, 7):
                k1 = complex(k_value(m, lam))
                k2 = complex(k_value(c.centered, lam))
                assert abs(k1 - k2) < 1e-10


class TestRadiusScan:
    def test_gaussian_decay(self, gaussian_model):
        rep = radius_scan(gaussian_model, (0.0, 0.0), (1.0, 10.0), (1, 40))
        assert rep.chi == pytest.approx(np.exp(-0.5), rel=1e-9)
        rs = [r for _, r in rep.grid]
        assert all(a >= b - 1e-12 for a, b in zip(rs, rs[1:]))
        assert rep.peaks == []

    def test_srw_lattice_peak_at_pi(self, srw):
        rep = radius_scan(srw, (0.0, 0.0), (1.0, 5.0), (1, 80))
        assert len(rep.peaks) == 1
        lam, r = rep.peaks[0]
        assert lam.imag == pytest.approx(np.pi, abs=1e-6)
        assert r == pytest.approx(1.0, abs=1e-8)

    def test_empty_scan(self, srw):
        rep = radius_scan(srw, (0.0, 0.0), (1.0, 0.5), (1, 0))
        assert rep.grid == [] and rep.chi is None


class TestContourIdentities:
    def test_first_identity_vanishes(self):
        i1, _i2, err = contour_identities(1.0, 2.0, 1.0)
        assert abs(i1) < 1e-6 and err < 1e-6

    def test_pole_formula_positive_x(self):
        _i1, i2, err = contour_identities(1.0, 2.0, 1.0)
        assert i2 == pytest.approx(2 * np.pi / np.e, abs=1e-6)
        assert err < 1e-6

    def test_pole_formula_negative_x(self):
        _i1, i2, err = contour_identities(1.0, 2.0, -1.0)
        assert abs(i2) < 1e-6 and err < 1e-6

    def test_random_complex_poles(self):
        rng = np.random.default_rng(31)
        for _ in range(6):
            a = complex(rng.uniform(0.3, 2.0), rng.uniform(-1.0, 1.0))
            b = complex(rng.uniform(0.3, 2.0), rng.uniform(-1.0, 1.0))
            if a == b:
                continue
            x = rng.uniform(-2.0, 2.0)
            _i1, _i2, err = contour_identities(a, b, x)
            assert err < 1e-6

    def test_preconditions(self):
        with pytest.raises(OutOfDomain):
            contour_identities(-1.0, 2.0, 0.5)
        with pytest.raises(ValueError):
            contour_identities(1.0, 1.0, 0.5)
