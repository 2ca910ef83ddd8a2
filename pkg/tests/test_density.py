import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlab.coefficients import RegularizationLevel, builtin_coefficients, regularize
from flowlab.density import (
    DensityRecordBatch,
    batch_statistic,
    budget_constants,
    entropy_estimate,
    log_density_along,
    lp_norm_estimate,
    mass_estimate,
    phi_integrand,
    pushforward_logK,
    run_density_ensemble,
    stratonovich_log_density,
    theorem_bound_rhs,
    time_threshold,
)
from flowlab.errors import BoundUnavailableError
from flowlab.gaussian import GaussianQuadrature
from flowlab.oracles import (
    ou_exact_log_density,
    translate_bound_rhs,
    translate_entropy_mc,
    translate_lp_norm,
)
from flowlab.sde import sample_brownian, simulate, simulate_ensemble

from conftest import make_sine_field


class TestPhiIntegrand:
    def test_identity_diffusion(self):
        field = builtin_coefficients("translate", d=2)
        val = phi_integrand(field, 0.0, np.zeros((1, 2)))
        assert val[0] == pytest.approx(1.0)

    def test_ou_linear(self, ou1):
        pts = np.array([[0.0], [1.0], [-2.0]])
        np.testing.assert_allclose(
            phi_integrand(ou1, 0.0, pts), (1.0 - pts[:, 0] ** 2) + 0.5, rtol=1e-12
        )

    def test_varying_sigma(self, sine_field):
        pts = np.array([[0.3], [1.9]])
        x = pts[:, 0]
        expected = 0.5 * (2.0 + np.sin(x)) ** 2 + 0.5 * np.cos(x) ** 2
        np.testing.assert_allclose(phi_integrand(sine_field, 0.0, pts), expected, rtol=1e-10)


class TestRecords:
    def test_degenerate_horizon_is_unit_mass(self, translate1):
        ens, rec = run_density_ensemble(translate1, 0.0, 0.0, ("gaussian", 50), 1e-3, seed=0)
        np.testing.assert_array_equal(rec.log_ktilde, 0.0)
        assert lp_norm_estimate(rec, 2.0).value == 1.0
        assert entropy_estimate(rec).value == 0.0
        assert mass_estimate(rec).value == 1.0

    def test_pushforward_inverse_identity(self, ou1):
        _, rec = run_density_ensemble(ou1, 0.0, 0.1, ("gaussian", 64), 1e-2, seed=1)
        np.testing.assert_array_equal(pushforward_logK(rec) + rec.log_ktilde, 0.0)

    def test_translate_per_path_oracle(self, translate1):
        ens, rec = run_density_ensemble(
            translate1, 0.0, 0.25, ("gaussian", 4000), 1e-3, seed=7
        )
        dw = ens.xT[:, 0] - ens.x0[:, 0]
        oracle = ens.x0[:, 0] * dw + dw**2 / 2.0
        err = np.abs(pushforward_logK(rec) - oracle)
        guarded = err / (1.0 + np.abs(oracle))
        assert guarded.mean() <= 1e-2

    def test_accumulator_matches_single_trajectory(self, sine_field):
        path = sample_brownian(0.0, 0.2, 1e-2, 1, seed=3, index=0)
        traj = simulate(sine_field, 0.0, 0.2, np.array([0.4]), path)
        rec_single = log_density_along(sine_field, traj, path)
        _, rec_ens = run_density_ensemble(sine_field, 0.0, 0.2, np.array([[0.4]]), 1e-2, seed=3)
        assert rec_single.S[0] == pytest.approx(rec_ens.S[0], rel=1e-12)
        assert rec_single.D[0] == pytest.approx(rec_ens.D[0], rel=1e-12)

    def test_ou_exact_density_ratio(self, ou1):
        tau = 0.25
        ens, rec = run_density_ensemble(ou1, 0.0, tau, ("gaussian", 2000), 1e-3, seed=9)
        oracle = np.array([
            ou_exact_log_density(1.0, tau, x0, xT)
            for x0, xT in zip(ens.x0[:, 0], ens.xT[:, 0])
        ])
        rel = np.abs(np.exp(rec.log_ktilde - oracle) - 1.0)
        assert rel.mean() <= 0.05

    def test_stratonovich_matches_ito_to_first_order(self, sine_field):
        diffs = []
        for dt in (4e-3, 2e-3):
            path = sample_brownian(0.0, 0.2, dt, 1, seed=11, index=0)
            traj = simulate(sine_field, 0.0, 0.2, np.array([0.3]), path)
            ito = log_density_along(sine_field, traj, path)
            strat = stratonovich_log_density(sine_field, traj, path)
            diffs.append(abs(ito.log_ktilde[0] - strat.log_ktilde[0]))
        assert diffs[1] < diffs[0]
        assert diffs[1] < 0.05


class TestStatistics:
    def test_lp_matches_closed_form(self, translate1):
        for tau, n in ((0.1, 30000), (0.25, 30000)):
            _, rec = run_density_ensemble(
                translate1, 0.0, tau, ("gaussian", n), 1e-3, seed=13
            )
            est = lp_norm_estimate(rec, 2.0)
            assert abs(est.value - translate_lp_norm(2.0, tau)) <= 3.0 * est.stderr

    def test_entropy_against_direct_mc(self, translate1):
        tau = 0.25
        _, rec = run_density_ensemble(translate1, 0.0, tau, ("gaussian", 30000), 1e-3, seed=17)
        est = entropy_estimate(rec)
        mc, mc_se = translate_entropy_mc(tau, 2_000_000)
        assert abs(est.value - mc) <= 3.0 * (est.stderr + mc_se) + 2e-3

    def test_mass_identity(self, translate1, ou1):
        for field in (translate1, ou1):
            _, rec = run_density_ensemble(field, 0.0, 0.2, ("gaussian", 20000), 1e-3, seed=19)
            est = mass_estimate(rec)
            assert abs(est.value - 1.0) <= 3.0 * est.stderr

    def test_rejects_bad_p(self, translate1):
        _, rec = run_density_ensemble(translate1, 0.0, 0.1, ("gaussian", 50), 1e-2, seed=0)
        with pytest.raises(ValueError):
            lp_norm_estimate(rec, 1.0)

    def test_batch_statistic_mean(self):
        vals = np.arange(100, dtype=float)
        est = batch_statistic(vals, lambda v: float(np.mean(v)))
        assert est.value == pytest.approx(49.5)
        assert est.stderr > 0

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=4, max_size=60))
    def test_mass_estimate_equals_direct_mean(self, logs):
        rec = DensityRecordBatch(S=-np.asarray(logs), D=np.zeros(len(logs)))
        est = mass_estimate(rec)
        assert est.value == pytest.approx(np.exp(logs).mean(), rel=1e-12)


class TestBounds:
    def test_translate_instance(self, translate1, quad1_fine):
        rhs = theorem_bound_rhs(translate1, 0.0, 0.1, 2.0, quad1_fine)
        assert rhs == pytest.approx(translate_bound_rhs(2.0, 0.1), rel=1e-8)
        assert rhs == pytest.approx(1.1823, abs=1e-4)

    def test_exponent_collapse(self, translate1, quad1_fine):
        rhs = theorem_bound_rhs(translate1, 0.0, 0.1, 1.0 + 1e-9, quad1_fine)
        assert rhs == pytest.approx(1.0, abs=1e-6)

    def test_zero_horizon(self, translate1, quad1_fine):
        assert theorem_bound_rhs(translate1, 0.3, 0.3, 2.0, quad1_fine) == 1.0

    def test_divergent_flagged(self, translate1, quad1_fine):
        with pytest.raises(BoundUnavailableError):
            theorem_bound_rhs(translate1, 0.0, 0.25, 2.0, quad1_fine)
        with pytest.raises(BoundUnavailableError):
            theorem_bound_rhs(translate1, 0.0, 0.05, 3.0, quad1_fine)

    def test_ordering_where_integrable(self, translate1, quad1_fine):
        _, rec = run_density_ensemble(translate1, 0.0, 0.05, ("gaussian", 20000), 1e-3, seed=23)
        for p in (1.5, 2.0):
            est = lp_norm_estimate(rec, p)
            rhs = theorem_bound_rhs(translate1, 0.0, 0.05, p, quad1_fine)
            assert est.value <= rhs + 3.0 * est.stderr


class TestBudget:
    def test_time_threshold_formula(self):
        field = builtin_coefficients("translate", d=1, lam=1.0)
        assert time_threshold(field) == pytest.approx(1.0 / 224.0)

    def test_constants_translate(self, quad1_fine):
        field = builtin_coefficients("translate", d=1, lam=0.25)
        budget = budget_constants(field, 1.0, quad1_fine)
        assert budget.T0 == pytest.approx(0.25 / (8.0 * math.e**2))
        assert budget.M1 == pytest.approx(math.sqrt(2.0 / math.pi))
        assert budget.Sigma_T == pytest.approx(math.sqrt(2.0), rel=1e-6)
        lam_expected = (budget.M2 * budget.Sigma_T / budget.T0) ** (1.0 / 12.0)
        assert budget.Lambda_T0 == pytest.approx(lam_expected, rel=1e-12)
        assert budget.N_tilde == math.ceil(1.0 / budget.T0)
        assert budget.C2 == pytest.approx(1.5, rel=1e-9)  # constant integrand
        assert budget.entropy_bound_limit == pytest.approx(
            budget.entropy_bound + 2.0 * math.exp(-1.0)
        )

    def test_budget_for_regularized_measurable_drift(self, sign1, quad1):
        reg = regularize(sign1, RegularizationLevel(8), quad1)
        tau = time_threshold(reg)
        budget = budget_constants(reg, tau, quad1, tgrid=5)
        assert np.isfinite(budget.entropy_bound)
        assert budget.entropy_bound > 0

    def test_entropy_within_budget_smoke(self, sign1, quad1):
        reg = regularize(sign1, RegularizationLevel(8), quad1)
        tau = time_threshold(reg)
        budget = budget_constants(reg, tau, quad1, tgrid=5)
        dt = tau / 8.0
        _, rec = run_density_ensemble(reg, 0.0, tau, ("gaussian", 4000), dt, seed=29)
        est = entropy_estimate(rec)
        assert est.value <= budget.entropy_bound_limit + 3.0 * est.stderr
        mass = mass_estimate(rec)
        assert abs(mass.value - 1.0) <= 3.0 * mass.stderr
