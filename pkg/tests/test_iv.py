import math
import warnings

import numpy as np
import pytest

from hazard_iv import (
    IdentificationError,
    MultipleRootsWarning,
    NoSolutionError,
    SurvivalDataset,
    ValidationError,
    WeakInstrumentError,
    WeakInstrumentWarning,
    first_stage_f,
    fit_cox,
    fit_iv,
    fit_pooled_iv,
    sandwich_variance,
)
from hazard_iv.iv import pool_estimates
from hazard_iv.simulation import SimConfig, generate_replicate

from oracles import random_survival_data


def dataset_with_instrument(rng, n=80, instrument=None, binary=True):
    time, status, x, inst, _ = random_survival_data(rng, n, binary_treatment=binary)
    if instrument is not None:
        inst = instrument
    return SurvivalDataset(time=time, status=status, treatment=x, instruments=inst)


class TestReduction:
    def test_instrument_equal_treatment_matches_cox(self, rng):
        for _ in range(5):
            time, status, x, _, _ = random_survival_data(rng, 60)
            d = SurvivalDataset(time=time, status=status, treatment=x,
                                instruments=x[:, None])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", WeakInstrumentWarning)
                iv = fit_iv(d, 0)
            cox = fit_cox(d)
            assert iv.beta_hat == pytest.approx(cox.beta_hat, abs=1e-10)
            assert iv.first_stage_f == math.inf

    def test_no_root_raises(self):
        # treatment perfectly orders the failures: the score keeps one sign
        x = np.array([1.0, 1.0, 0.0])
        d = SurvivalDataset(time=[3.0, 2.0, 1.0], status=[1, 1, 1], treatment=x,
                            instruments=x[:, None])
        with pytest.raises(NoSolutionError):
            fit_iv(d, 0)

    def test_constant_instrument_rejected(self, rng):
        with pytest.warns(UserWarning):
            d = dataset_with_instrument(rng, instrument=np.ones((80, 1)))
        with pytest.raises(IdentificationError):
            fit_iv(d, 0)


class TestAffineInvariance:
    def test_scale_and_shift_leave_fit_unchanged(self):
        d, _ = generate_replicate(
            SimConfig(n=500, alpha_u=2, alpha_w=2, hr_x=1.5, reps=1, seed=4), 0)
        base = fit_iv(d, 0)
        for a, b in ((2.0, 0.0), (-1.3, 0.7), (0.04, -5.0)):
            d2 = d.with_instruments(a * d.instruments + b)
            other = fit_iv(d2, 0)
            assert other.beta_hat == pytest.approx(base.beta_hat, abs=1e-9)
            assert other.se == pytest.approx(base.se, rel=1e-9)


class TestSandwich:
    def test_matches_model_se_on_null_data(self):
        # exogenous null effect, instrument = treatment: sandwich and
        # model-based variance estimate the same information
        d, _ = generate_replicate(
            SimConfig(n=2000, alpha_u=0, alpha_w=0, hr_x=1.0, reps=1, seed=12), 0)
        d = d.with_instruments(d.treatment[:, None])
        cox = fit_cox(d)
        assert abs(cox.beta_hat) < 0.15
        var = sandwich_variance(d, 0, cox.beta_hat)
        assert math.sqrt(var) == pytest.approx(cox.se, rel=0.2)

    def test_zero_derivative_is_weak_instrument_error(self, rng):
        # constant treatment makes the instrumented score flat in beta
        with pytest.warns(UserWarning):
            d = SurvivalDataset(time=rng.exponential(1, 30),
                                status=np.ones(30), treatment=np.full(30, 0.7),
                                instruments=rng.standard_normal((30, 1)))
        with pytest.raises(WeakInstrumentError):
            sandwich_variance(d, 0, 0.3)

    def test_fit_reports_sandwich_kind(self):
        d, _ = generate_replicate(
            SimConfig(n=400, alpha_u=1, alpha_w=2, hr_x=1.5, reps=1, seed=3), 0)
        fit = fit_iv(d, 0)
        assert fit.se_kind == "sandwich"
        assert fit.converged
        assert abs(fit.score_at_solution) <= 1e-10 * (1 + d.n)


class TestFirstStageF:
    def test_perfect_fit_is_infinite(self, rng):
        time, status, x, _, _ = random_survival_data(rng, 50)
        d = SurvivalDataset(time=time, status=status, treatment=x,
                            instruments=x[:, None])
        assert first_stage_f(d, 0) == math.inf

    def test_null_f_has_mean_one(self, rng):
        stats = []
        for _ in range(400):
            x = rng.standard_normal(1000)
            w = rng.standard_normal(1000)
            r = np.corrcoef(x, w)[0, 1]
            stats.append(r * r * 998 / (1 - r * r))
        assert np.mean(stats) == pytest.approx(1.0, abs=0.2)

    def test_simulated_strong_instrument_snapshot(self):
        d, _ = generate_replicate(
            SimConfig(n=1000, alpha_u=1, alpha_w=3, hr_x=1.5, reps=1, seed=14), 0)
        f = first_stage_f(d, 0)
        assert f > 100.0
        # regression snapshot for this seed
        assert f == pytest.approx(1039.79, abs=0.05)

    def test_weak_instrument_warns(self, rng):
        time, status, x, _, _ = random_survival_data(rng, 200, binary_treatment=True)
        noise = rng.standard_normal((200, 1))  # unrelated instrument
        d = SurvivalDataset(time=time, status=status, treatment=x, instruments=noise)
        with pytest.warns(WeakInstrumentWarning):
            try:
                fit_iv(d, 0)
            except NoSolutionError:
                pass

    def test_too_few_subjects(self, two_subject):
        d = SurvivalDataset(time=two_subject.time, status=two_subject.status,
                            treatment=two_subject.treatment,
                            instruments=np.array([[0.1], [0.4]]))
        with pytest.raises(ValidationError):
            first_stage_f(d, 0)


class TestPooled:
    def test_pooling_arithmetic(self):
        assert pool_estimates([0.2, 0.6], [0.1, 0.3]) == pytest.approx(0.3, abs=1e-12)

    def test_single_instrument_identical_to_fit_iv(self):
        d, _ = generate_replicate(
            SimConfig(n=500, alpha_u=1, alpha_w=2, hr_x=1.5, reps=1, seed=7), 0)
        single = fit_iv(d, 0)
        pooled = fit_pooled_iv(d)
        assert pooled.beta_hat == pytest.approx(single.beta_hat, abs=1e-12)
        assert pooled.method == "pooled_iv"
        assert len(pooled.components) == 1

    def test_failing_instrument_excluded(self):
        d, _ = generate_replicate(
            SimConfig(n=500, alpha_u=1, alpha_w=2, hr_x=1.5, reps=1, seed=7), 0)
        with pytest.warns(UserWarning):
            d2 = d.with_instruments(
                np.column_stack([d.instruments[:, 0], np.ones(d.n)]))
        pooled = fit_pooled_iv(d2)
        assert len(pooled.components) == 1
        assert any("excluded" in note for note in pooled.warnings)

    def test_all_instruments_failing_raises(self, rng):
        with pytest.warns(UserWarning):
            d = dataset_with_instrument(rng, instrument=np.ones((80, 1)))
        with pytest.raises(NoSolutionError):
            fit_pooled_iv(d)

    def test_bootstrap_se_when_requested(self):
        d, _ = generate_replicate(
            SimConfig(n=300, alpha_u=1, alpha_w=2, hr_x=1.5, reps=1, seed=9), 0)
        plain = fit_pooled_iv(d)
        assert math.isnan(plain.se)
        booted = fit_pooled_iv(d, boot_reps=20, seed=5)
        assert math.isfinite(booted.se) and booted.se > 0
        again = fit_pooled_iv(d, boot_reps=20, seed=5)
        assert booted.se == again.se


class TestMultipleRoots:
    def test_grid_roots_finds_all_roots_of_cubic(self):
        from hazard_iv.rootfind import grid_roots

        roots = grid_roots(lambda x: (x - 1) * (x + 2) * (x - 5), (-10, 10),
                           n_points=64, accept_tol=1e-6)
        assert sorted(round(r, 6) for r in roots) == [-2.0, 1.0, 5.0]

    def test_extra_roots_trigger_warning_and_cox_anchoring(self, monkeypatch):
        import hazard_iv.iv as iv_mod

        d, _ = generate_replicate(
            SimConfig(n=400, alpha_u=1, alpha_w=2, hr_x=1.5, reps=1, seed=3), 0)
        true_root = fit_iv(d, 0).beta_hat
        cox_beta = fit_cox(d).beta_hat

        def fake_grid(score, bracket, n_points=64, accept_tol=None, refine_xtol=1e-12):
            return [true_root, cox_beta + 0.001]

        monkeypatch.setattr(iv_mod, "grid_roots", fake_grid)
        with pytest.warns(MultipleRootsWarning):
            fit = fit_iv(d, 0)
        # the fabricated root closest to the unadjusted fit wins
        assert fit.beta_hat == pytest.approx(cox_beta + 0.001, abs=1e-9)
        assert any("roots" in note for note in fit.warnings)
