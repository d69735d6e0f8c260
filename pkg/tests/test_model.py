import json

import numpy as np
import pytest

from msmw.errors import NotAperiodic, NotIrreducible, StripViolation
from msmw.model import (
    Gaussian,
    Lattice,
    MarkovKernel,
    SemiMarkovModel,
    Uniform,
    model_from_json,
    model_to_json,
    step_laplace,
    step_laplace_deriv,
    validate,
)


class TestStepLaplace:
    def test_lattice_mass(self, srw):
        assert step_laplace(srw.law(0, 0), 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_lattice_cosh(self, srw):
        # frozen from the two-term sum (e + 1/e)/2
        assert step_laplace(srw.law(0, 0), 1.0) == pytest.approx(1.5430806348152437, abs=1e-12)

    def test_gaussian_mgf(self):
        # closed form e^{lam mu + lam^2 v / 2} at lam = 2: e^2
        assert step_laplace(Gaussian(0.0, 1.0), 2.0) == pytest.approx(np.exp(2.0), rel=1e-12)

    def test_uniform_closed_form_and_small_lambda(self):
        law = Uniform(-1.0, 2.0)
        lam = 0.7
        expect = (np.exp(lam * 2) - np.exp(-lam)) / (lam * 3)
        assert step_laplace(law, lam) == pytest.approx(expect, rel=1e-12)
        assert step_laplace(law, 0.0) == pytest.approx(1.0, abs=1e-14)
        # series branch must join the closed form smoothly
        for lam in (1e-3, 0.1, 0.3):
            direct = (np.exp(lam * 2) - np.exp(-lam)) / (lam * 3)
            assert complex(step_laplace(law, lam)).real == pytest.approx(direct, rel=1e-12)
        # at tiny lambda the closed form cancels catastrophically; the series
        # value must match 1 + lam * mean + lam^2 * M2 / 2 instead
        lam = 1e-8
        expect = 1.0 + lam * 0.5 + lam * lam * 0.5
        assert complex(step_laplace(law, lam)).real == pytest.approx(expect, rel=1e-14)

    def test_strip_violation(self, srw):
        with pytest.raises(StripViolation):
            step_laplace(srw.law(0, 0), 1.5, alpha=1.0)

    def test_derivatives_match_finite_differences(self):
        h = 1e-5
        for law in (Lattice(1.0, -1, (0.3, 0.2, 0.5)), Gaussian(0.1, 0.7), Uniform(-0.5, 1.5)):
            for lam in (0.0, 0.4):
                fd = (step_laplace(law, lam + h) - step_laplace(law, lam - h)) / (2 * h)
                an = step_laplace_deriv(law, lam, 1)
                assert complex(an).real == pytest.approx(complex(fd).real, rel=1e-8, abs=1e-8)

    def test_log_convexity_on_sampled_pairs(self, srw, gaussian_model, uniform_model):
        rng = np.random.default_rng(7)
        laws = [srw.law(0, 0), gaussian_model.law(0, 0), uniform_model.law(0, 0)]
        for law in laws:
            for _ in range(20):
                l1, l2 = rng.uniform(-1.0, 1.0, 2)
                f1 = complex(step_laplace(law, l1)).real
                f2 = complex(step_laplace(law, l2)).real
                mid = complex(step_laplace(law, (l1 + l2) / 2)).real
                assert np.sqrt(f1) * np.sqrt(f2) >= mid - 1e-12


class TestValidate:
    def test_single_state_dirac(self, dirac_model):
        rep = validate(dirac_model)
        assert rep.irreducible and rep.aperiodic
        assert rep.drift == pytest.approx(0.0, abs=1e-15)
        assert rep.stationary == pytest.approx([1.0])

    def test_two_state_hand_computation(self, two_state):
        rep = validate(two_state)
        assert rep.stationary == pytest.approx([0.5, 0.5], abs=1e-12)
        assert rep.drift == pytest.approx(0.0, abs=1e-12)
        assert rep.h3_satisfied

    def test_three_state_stationary(self, three_state):
        rep = validate(three_state)
        assert rep.stationary == pytest.approx([5 / 18, 5 / 18, 8 / 18], abs=1e-12)
        assert rep.h3_satisfied

    def test_periodic_kernel_rejected(self):
        m = SemiMarkovModel(
            kernel=MarkovKernel([[0.0, 1.0], [1.0, 0.0]]),
            steps=((None, Lattice(1.0, 1, (1.0,))), (Lattice(1.0, -1, (1.0,)), None)),
        )
        with pytest.raises(NotAperiodic) as exc:
            validate(m)
        assert exc.value.period == 2

    def test_reducible_kernel_rejected(self):
        d = Lattice(1.0, 0, (1.0,))
        m = SemiMarkovModel(
            kernel=MarkovKernel([[1.0, 0.0], [0.5, 0.5]]),
            steps=((d, None), (d, d)),
        )
        with pytest.raises(NotIrreducible) as exc:
            validate(m)
        assert exc.value.pair == (0, 1)

    def test_stationary_invariants(self, lattice_battery):
        for m in lattice_battery:
            rep = validate(m)
            nu = rep.stationary
            assert abs(nu.sum() - 1.0) < 1e-12
            assert np.max(np.abs(nu @ m.kernel.rows - nu)) < 1e-10
            assert np.all(nu > 0)

    def test_drift_vs_monte_carlo(self, three_state):
        # gamma must agree with a stationary-start one-step simulation
        from msmw.montecarlo import SimulationPlan, simulate_paths

        rep = validate(three_state)
        plan = SimulationPlan(n=1, paths=200_000, seed=11)
        est, var_acc = 0.0, 0.0
        for i in range(3):
            _st, sums, _m = simulate_paths(three_state, plan, start_state=i)
            est += rep.stationary[i] * sums.mean()
            var_acc += (rep.stationary[i] ** 2) * sums.var(ddof=1) / plan.paths
        assert abs(est - rep.drift) <= 3 * np.sqrt(var_acc)


class TestModelStructure:
    def test_missing_step_law_rejected(self):
        with pytest.raises(ValueError, match="missing step law"):
            SemiMarkovModel(
                kernel=MarkovKernel([[0.5, 0.5], [0.5, 0.5]]),
                steps=((Lattice(1.0, 1, (1.0,)), None),
                       (Lattice(1.0, -1, (1.0,)), Lattice(1.0, -1, (1.0,)))),
            )

    def test_mixed_spans_rejected(self):
        with pytest.raises(ValueError, match="share one span"):
            SemiMarkovModel(
                kernel=MarkovKernel([[0.5, 0.5], [0.5, 0.5]]),
                steps=((Lattice(1.0, 1, (1.0,)), Lattice(0.5, 1, (1.0,))),
                       (Lattice(1.0, -1, (1.0,)), Lattice(1.0, -1, (1.0,)))),
            )

    def test_mixed_kind_model_is_not_lattice(self):
        m = SemiMarkovModel(
            kernel=MarkovKernel([[0.5, 0.5], [0.5, 0.5]]),
            steps=((Lattice(1.0, 1, (1.0,)), Gaussian(0.0, 1.0)),
                   (Lattice(1.0, -1, (1.0,)), Lattice(1.0, -1, (1.0,)))),
        )
        assert not m.is_lattice()


class TestJsonRoundTrip:
    def test_round_trip_all_law_kinds(self, three_state, gaussian_model, uniform_model):
        for m in (three_state, gaussian_model, uniform_model):
            obj = model_to_json(m)
            # serialization is idempotent
            obj2 = model_to_json(model_from_json(obj))
            assert json.dumps(obj, sort_keys=True) == json.dumps(obj2, sort_keys=True)

    def test_round_trip_preserves_numerics(self, three_state):
        m2 = model_from_json(model_to_json(three_state))
        assert np.array_equal(m2.kernel.rows, three_state.kernel.rows)
        assert m2.law(2, 0) == three_state.law(2, 0)
        assert m2.moment_window == three_state.moment_window

    def test_states_mismatch_rejected(self):
        with pytest.raises(ValueError, match="states"):
            model_from_json({"states": 3, "kernel": [[1.0]], "steps": {}, "alpha": 1.0})
