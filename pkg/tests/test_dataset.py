import numpy as np
import pytest

from hazard_iv import (
    ConfigurationError,
    IdentificationWarning,
    SurvivalDataset,
    ValidationError,
    build_risk_index,
    fit_cox,
    fit_iv,
    load_csv,
)
from hazard_iv.simulation import SimConfig, generate_replicate

from conftest import write_csv

BASIC_CSV = "t,d,x\n2,1,1\n1,1,0\n3,0,1\n0.5,1,0\n"
BASIC_MAP = {"time": "t", "status": "d", "treatment": "x"}


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        d = load_csv(write_csv(tmp_path / "a.csv", BASIC_CSV), BASIC_MAP)
        assert d.n == 4
        assert d.n_events == 3
        assert d.n_dropped == 0
        np.testing.assert_allclose(d.time, [2, 1, 3, 0.5])

    def test_status_out_of_range_names_row(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", "t,d,x\n2,1,1\n1,2,0\n")
        with pytest.raises(ValidationError, match="row 2"):
            load_csv(path, BASIC_MAP)

    def test_drop_policy_counts_rows(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", "t,d,x\n2,1,1\n1,1,NA\n3,0,1\n0.5,1,0\n")
        d = load_csv(path, BASIC_MAP, na_policy="drop")
        assert d.n == 3
        assert d.n_dropped == 1

    def test_reject_policy_raises(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", "t,d,x\n2,1,1\n1,1,\n3,0,0\n")
        with pytest.raises(ValidationError, match="missing value"):
            load_csv(path, BASIC_MAP)

    def test_missing_column_is_configuration_error(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", BASIC_CSV)
        with pytest.raises(ConfigurationError, match="nope"):
            load_csv(path, {"time": "t", "status": "d", "treatment": "nope"})

    def test_missing_binding_is_configuration_error(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", BASIC_CSV)
        with pytest.raises(ConfigurationError, match="treatment"):
            load_csv(path, {"time": "t", "status": "d"})

    def test_non_numeric_cell_names_row_and_column(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", "t,d,x\n2,1,1\nfoo,1,0\n")
        with pytest.raises(ValidationError, match="'t', data row 2"):
            load_csv(path, BASIC_MAP)

    def test_custom_delimiter(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", "t;d;x\n2;1;1\n1;1;0\n")
        d = load_csv(path, BASIC_MAP, delimiter=";")
        assert d.n == 2

    def test_instrument_and_covariate_binding(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", "t,d,x,w,q\n2,1,1,0.3,5\n1,1,0,-0.2,6\n")
        d = load_csv(path, {**BASIC_MAP, "instruments": ["w"], "covariates": ["q"]})
        assert d.instruments.shape == (2, 1)
        assert d.covariates.shape == (2, 1)
        np.testing.assert_allclose(d.instruments[:, 0], [0.3, -0.2])


class TestValidation:
    def test_negative_time_rejected(self):
        with pytest.raises(ValidationError):
            SurvivalDataset(time=[1, -2], status=[1, 1], treatment=[0, 1])

    def test_bad_status_rejected(self):
        with pytest.raises(ValidationError, match="status"):
            SurvivalDataset(time=[1, 2], status=[1, 2], treatment=[0, 1])

    def test_no_events_rejected(self):
        with pytest.raises(ValidationError, match="no events"):
            SurvivalDataset(time=[1, 2], status=[0, 0], treatment=[0, 1])

    def test_nan_covariate_rejected(self):
        with pytest.raises(ValidationError):
            SurvivalDataset(time=[1, 2], status=[1, 1], treatment=[0, 1],
                            covariates=[[1.0], [np.nan]])

    def test_constant_treatment_warns(self):
        with pytest.warns(IdentificationWarning, match="treatment"):
            SurvivalDataset(time=[1, 2], status=[1, 1], treatment=[0.7, 0.7])

    def test_constant_instrument_warns(self):
        with pytest.warns(IdentificationWarning, match="instrument"):
            SurvivalDataset(time=[1, 2], status=[1, 1], treatment=[0, 1],
                            instruments=[[1.0], [1.0]])

    def test_arrays_read_only(self, four_row):
        with pytest.raises(ValueError):
            four_row.time[0] = 99.0


class TestRiskIndex:
    def test_descending_order_all_events(self):
        d = SurvivalDataset(time=[2, 1, 3, 0.5], status=[1, 1, 1, 1],
                            treatment=[1, 0, 1, 0])
        idx = build_risk_index(d)
        np.testing.assert_array_equal(d.time[idx.order], [3, 2, 1, 0.5])
        assert idx.event_positions.tolist() == [0, 1, 2, 3]

    def test_tie_rule_event_before_censoring(self):
        d = SurvivalDataset(time=[1.0, 1.0], status=[0, 1], treatment=[0, 1])
        idx = build_risk_index(d)
        # the event row (index 1) sorts ahead of the censored row at the tie
        assert idx.order.tolist() == [1, 0]
        assert idx.tie_group_starts.tolist() == [0]

    def test_tie_groups_span_equal_times(self):
        d = SurvivalDataset(time=[2, 2, 1, 1, 1], status=[1, 0, 1, 1, 0],
                            treatment=[0, 1, 0, 1, 0])
        idx = build_risk_index(d)
        assert idx.tie_group_starts.tolist() == [0, 2]
        assert idx.run_last_index().tolist() == [1, 1, 4, 4, 4]

    def test_simulated_order_non_increasing(self):
        # sort-check oracle: compare against an independently sorted copy
        d, _ = generate_replicate(SimConfig(n=1000, reps=1, seed=3), 0)
        idx = build_risk_index(d)
        sorted_times = d.time[idx.order]
        assert np.all(np.diff(sorted_times) <= 0)
        np.testing.assert_array_equal(np.sort(d.time)[::-1], sorted_times)

    def test_index_deterministic_for_identical_bytes(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", BASIC_CSV)
        idx1 = build_risk_index(load_csv(path, BASIC_MAP))
        idx2 = build_risk_index(load_csv(path, BASIC_MAP))
        np.testing.assert_array_equal(idx1.order, idx2.order)
        np.testing.assert_array_equal(idx1.event_positions, idx2.event_positions)
        np.testing.assert_array_equal(idx1.tie_group_starts, idx2.tie_group_starts)


class TestPermutationInvariance:
    def test_fits_invariant_to_row_order(self, rng):
        d, _ = generate_replicate(
            SimConfig(n=300, alpha_u=1, alpha_w=2, hr_x=1.5, reps=1, seed=11), 0
        )
        perm = rng.permutation(d.n)
        shuffled = SurvivalDataset(
            time=d.time[perm], status=d.status[perm], treatment=d.treatment[perm],
            instruments=d.instruments[perm],
        )
        assert fit_cox(d).beta_hat == pytest.approx(fit_cox(shuffled).beta_hat, abs=1e-12)
        f1, f2 = fit_iv(d, 0), fit_iv(shuffled, 0)
        assert f1.beta_hat == pytest.approx(f2.beta_hat, abs=1e-12)
        assert f1.se == pytest.approx(f2.se, rel=1e-10)

    def test_subset_roundtrip(self, four_row):
        sub = four_row.subset([2, 0])
        np.testing.assert_allclose(sub.time, [3.0, 2.0])
        assert sub.n_events == 1
