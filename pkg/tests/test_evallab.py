import numpy as np
import pytest

from targetrf.cart import TreeConfig
from targetrf.datacore import expanding_windows
from targetrf.evallab import (
    ForecastMethod,
    dm_test,
    mse_ratio,
    run_forecast_experiment,
    tree_diagnostics,
)
from targetrf.forest import ForestConfig
from targetrf.simlab import sample_sparse_linear


@pytest.fixture(scope="module")
def experiment():
    data, _ = sample_sparse_linear(70, 8, 3, 0.5, 42)
    plan = expanding_windows(70, 64, 1)
    cfg = ForestConfig(n_trees=8, seed=2, tree=TreeConfig(max_depth=2))
    methods = [
        ForecastMethod("rf"),
        ForecastMethod("trf", s_prime=8),
        ForecastMethod("trf", s_prime=3),
    ]
    report = run_forecast_experiment(data, plan, methods, cfg)
    return data, plan, cfg, methods, report


class TestRunForecastExperiment:
    def test_record_count(self, experiment):
        _, plan, _, methods, report = experiment
        assert len(report.records) == len(plan) * len(methods)

    def test_full_targeting_equals_rf(self, experiment):
        *_, report = experiment
        assert np.array_equal(
            report.squared_errors("rf"), report.squared_errors("trf8")
        )
        rf = [r.forecast for r in report.records if r.method == "rf"]
        trf = [r.forecast for r in report.records if r.method == "trf8"]
        assert rf == trf

    def test_single_window_plan(self):
        data, _ = sample_sparse_linear(40, 5, 2, 0.5, 7)
        plan = expanding_windows(40, 39, 1)
        cfg = ForestConfig(n_trees=3, seed=1, tree=TreeConfig(max_depth=2))
        methods = [ForecastMethod("rf"), ForecastMethod("trf", s_prime=2)]
        report = run_forecast_experiment(data, plan, methods, cfg)
        assert len(report.records) == len(methods)

    def test_determinism(self, experiment):
        data, plan, cfg, methods, report = experiment
        again = run_forecast_experiment(data, plan, methods, cfg)
        assert again.records == report.records

    def test_actuals_align_with_target_rows(self, experiment):
        data, plan, _, _, report = experiment
        for record in report.records:
            assert record.actual == data.response[record.target_time - 1]

    def test_regime_labels_attached(self):
        data, _ = sample_sparse_linear(40, 4, 2, 0.5, 3)
        plan = expanding_windows(40, 37, 1)
        cfg = ForestConfig(n_trees=2, seed=1, tree=TreeConfig(max_depth=1))
        regimes = {38: "rec", 39: "exp", 40: "rec"}
        report = run_forecast_experiment(
            data, plan, [ForecastMethod("rf")], cfg, regimes=regimes
        )
        assert [r.regime for r in report.records] == ["rec", "exp", "rec"]
        assert np.array_equal(report.regime_mask("rec"), [True, False, True])

    def test_duplicate_labels_rejected(self, experiment):
        data, plan, cfg, *_ = experiment
        with pytest.raises(ValueError, match="unique"):
            run_forecast_experiment(
                data, plan, [ForecastMethod("rf"), ForecastMethod("rf")], cfg
            )

    def test_plan_must_fit_dataset(self):
        data, _ = sample_sparse_linear(30, 4, 2, 0.5, 3)
        plan = expanding_windows(40, 37, 1)
        cfg = ForestConfig(n_trees=2, seed=1)
        with pytest.raises(ValueError, match="past the end"):
            run_forecast_experiment(data, plan, [ForecastMethod("rf")], cfg)


class TestMseRatio:
    def test_identity(self, experiment):
        *_, report = experiment
        assert mse_ratio(report, "rf", "rf") == 1.0

    def test_hand_case(self):
        # two windows with errors a = (1, 1), b = (2, 2) -> ratio 0.5
        from targetrf.evallab import ForecastReport, WindowForecast

        records = tuple(
            WindowForecast(target_time=t, method=m, s_prime=None, actual=0.0,
                           forecast=f)
            for t, (m, f) in enumerate(
                [("a", 1.0), ("b", 2.0**0.5), ("a", -1.0), ("b", -(2.0**0.5))]
            )
        )
        report = ForecastReport(records=records, horizon=1, method_labels=("a", "b"))
        assert mse_ratio(report, "a", "b") == pytest.approx(0.5)

    def test_mask_selects_single_window(self, experiment):
        *_, report = experiment
        mask = np.zeros(6, dtype=bool)
        mask[2] = True
        ea = report.squared_errors("trf3")[2]
        eb = report.squared_errors("rf")[2]
        assert mse_ratio(report, "trf3", "rf", mask) == pytest.approx(ea / eb)

    def test_empty_mask_rejected(self, experiment):
        *_, report = experiment
        with pytest.raises(ValueError, match="no windows"):
            mse_ratio(report, "rf", "trf3", np.zeros(6, dtype=bool))

    def test_unknown_method(self, experiment):
        *_, report = experiment
        with pytest.raises(KeyError):
            mse_ratio(report, "rf", "nope")


class TestDmTest:
    def test_identical_sequences_degenerate(self):
        r = dm_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 1)
        assert (r.statistic, r.p_value) == (0.0, 0.5)

    def test_hand_oracle_h1(self):
        # d = (1, -1, 2, -2, 4): statistic = mean / sqrt(gamma0 / 5)
        a = np.zeros(5)
        b = np.array([1.0, -1.0, 2.0, -2.0, 4.0])
        d = b - a
        gamma0 = ((d - d.mean()) ** 2).mean()
        expected = d.mean() / np.sqrt(gamma0 / 5)
        r = dm_test(a, b, 1)
        assert r.statistic == pytest.approx(expected)
        assert r.hac_variance == pytest.approx(gamma0)

    def test_bartlett_weights_hand_oracle(self):
        rng = np.random.default_rng(8)
        a = rng.random(30)
        b = rng.random(30)
        h = 4
        d = b - a
        c = d - d.mean()
        T = 30
        v = (c @ c) / T
        for j in range(1, h):
            v += 2 * (1 - j / h) * (c[j:] @ c[:-j]) / T
        r = dm_test(a, b, h)
        assert r.hac_variance == pytest.approx(v)
        assert r.statistic == pytest.approx(d.mean() / np.sqrt(v / T))

    def test_antisymmetry(self):
        rng = np.random.default_rng(3)
        a = rng.random(40)
        b = rng.random(40)
        for h in (1, 3):
            r_ab = dm_test(a, b, h)
            r_ba = dm_test(b, a, h)
            assert r_ba.statistic == pytest.approx(-r_ab.statistic)
            assert r_ba.p_value == pytest.approx(1.0 - r_ab.p_value)

    def test_negative_hac_variance_degenerates(self):
        # strongly alternating differential: Bartlett sum can fall to zero
        d = np.array([1.0, -1.0] * 10)
        r = dm_test(np.zeros(20), d, 2)
        if r.hac_variance <= 0:
            assert (r.statistic, r.p_value) == (0.0, 0.5)

    def test_length_validation(self):
        with pytest.raises(ValueError, match="equal length"):
            dm_test([1.0, 2.0], [1.0], 1)
        with pytest.raises(ValueError, match="observations"):
            dm_test([1.0, 2.0], [1.0, 2.0], 1)


class TestTreeDiagnostics:
    def test_identical_trees_have_unit_correlation(self):
        # no bootstrap, full mtry, full targeting: zero tree diversity
        data, _ = sample_sparse_linear(60, 3, 2, 0.5, 13)
        cfg = ForestConfig(
            n_trees=4, bootstrap=False, seed=3, tree=TreeConfig(mtry=3, max_depth=2)
        )
        curve = tree_diagnostics(data, np.arange(40), np.arange(40, 60), [3], cfg)
        assert curve.rows[0].tree_correlation == pytest.approx(1.0, abs=1e-12)

    def test_full_targeting_row_matches_rf_diagnostics(self):
        from targetrf.forest import fit_forest, tree_predictions

        data, _ = sample_sparse_linear(80, 6, 3, 0.5, 29)
        cfg = ForestConfig(n_trees=6, seed=11, tree=TreeConfig(max_depth=2))
        curve = tree_diagnostics(data, np.arange(60), np.arange(60, 80), [6], cfg)
        train = data.select_rows(np.arange(60))
        forest = fit_forest(train, cfg)
        errors = data.response[60:, None] - tree_predictions(forest, data.features[60:])
        assert curve.rows[0].tree_mse == pytest.approx((errors**2).mean(axis=0).mean())

    def test_pair_average_matches_explicit_loop(self):
        data, _ = sample_sparse_linear(70, 5, 2, 0.5, 31)
        cfg = ForestConfig(n_trees=5, seed=7, tree=TreeConfig(max_depth=2))
        curve = tree_diagnostics(data, np.arange(50), np.arange(50, 70), [5], cfg)
        from targetrf.forest import fit_forest, tree_predictions
        from targetrf.targeting import fit_trf

        train = data.select_rows(np.arange(50))
        _, forest = fit_trf(train, 5, "none", cfg)
        E = data.response[50:, None] - tree_predictions(forest, data.features[50:])
        B = E.shape[1]
        kappas = [
            (E[:, i] * E[:, j]).mean()
            for i in range(B)
            for j in range(B)
            if i != j
        ]
        denom = np.sqrt((E**2).mean(axis=0)).mean() ** 2
        assert curve.rows[0].tree_correlation == pytest.approx(
            np.mean(kappas) / denom, rel=1e-12
        )

    def test_validation(self):
        data, _ = sample_sparse_linear(30, 4, 2, 0.5, 3)
        cfg = ForestConfig(n_trees=2, seed=0)
        with pytest.raises(ValueError, match="disjoint"):
            tree_diagnostics(data, np.arange(20), np.arange(15, 30), [2], cfg)
        with pytest.raises(ValueError, match="empty"):
            tree_diagnostics(data, np.arange(20), [], [2], cfg)
        with pytest.raises(ValueError, match="s_prime"):
            tree_diagnostics(data, np.arange(20), np.arange(20, 30), [9], cfg)


class TestCurveSerialization:
    def test_dataframe_columns(self):
        data, _ = sample_sparse_linear(50, 4, 2, 0.5, 3)
        cfg = ForestConfig(n_trees=3, seed=0, tree=TreeConfig(max_depth=1))
        curve = tree_diagnostics(data, np.arange(35), np.arange(35, 50), [2, 4], cfg)
        df = curve.to_dataframe()
        assert list(df.columns) == ["s_prime", "tree_mse", "tree_correlation", "n_selected"]
        assert list(df.s_prime) == [2, 4]
