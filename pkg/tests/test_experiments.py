"""Tests for figure tables, replicate summaries and the bound check."""

import math

import numpy as np
import pandas as pd
import pytest

from qgain.errors import ConfigValidationError, ExperimentBudgetError, WeightError
from qgain.tools.experiments import (
    ExperimentConfig,
    FigureKind,
    bound_check,
    default_lambda_grid,
    default_multipliers,
    empirical_nqg,
    fig1_data,
    fig2_data,
    fig3_data,
    fig56_data,
    scheme_weights,
    summarize_replicates,
)
from qgain.tools.order_stats import build_moment_table
from qgain.tools.quadratic import QuadraticModel
from qgain.tools.weights import WeightVector, make_cma_log


class TestDefaults:
    def test_multipliers(self):
        assert default_multipliers() == [0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0]

    def test_lambda_grid(self):
        grid = default_lambda_grid(10_000)
        assert grid[0] == 2
        assert grid[-1] == 10_000
        assert all(b > a for a, b in zip(grid, grid[1:]))


class TestSchemeWeights:
    def test_truncation_ratio(self):
        assert scheme_weights("truncation_4", 20, build_moment_table(20).e1).mu == 5

    def test_undefined_cells(self):
        assert scheme_weights("truncation_10", 4, build_moment_table(4).e1) is None
        assert scheme_weights("optimal", 1, [0.0]) is None

    def test_unknown_scheme(self):
        with pytest.raises(WeightError):
            scheme_weights("geometric", 4, build_moment_table(4).e1)


class TestFig1:
    def test_sphere_limits(self):
        table = fig1_data([4, 10, 100, 1000, 10_000])
        assert list(table.columns) == ["lambda", "optimal", "cma_log", "truncation_4", "truncation_10"]
        last = table.iloc[-1]
        assert 0.45 <= last["optimal"] < 0.5
        others = table[["cma_log", "truncation_4", "truncation_10"]].to_numpy()
        assert np.nanmax(others) <= 0.25
        assert math.isnan(table.iloc[0]["truncation_10"])

    def test_optimal_dominates(self):
        table = fig1_data([10, 100])
        for scheme in ("cma_log", "truncation_4", "truncation_10"):
            assert np.all(table["optimal"] >= table[scheme])

    @pytest.mark.parametrize("lambdas", [[10, 4], [4, 4], [0, 3]])
    def test_grid_must_increase(self, lambdas):
        with pytest.raises(ConfigValidationError):
            fig1_data(lambdas)


class TestFig2:
    def test_columns_and_modes(self, mc_source):
        table = fig2_data([10, 100], [4, 10], lambda_exact=5, moment_source=mc_source)
        assert list(table.columns) == ["N", "lambda", "scheme", "mode", "mu_w", "sigma_bar_star", "phi_hat"]
        assert set(table.loc[table["lambda"] == 4, "mode"]) == {"exact"}
        assert set(table.loc[table["lambda"] == 10, "mode"]) == {"large_lambda"}

    def test_sphere_regime(self):
        table = fig2_data([10_000], [10], lambda_exact=2)
        row = table.iloc[0]
        e1 = build_moment_table(10).e1
        weights = scheme_weights("optimal", 10, e1)
        limit = weights.mu_w * -np.dot(weights.w, e1)
        assert row["sigma_bar_star"] == pytest.approx(limit, rel=0.05)

    def test_large_population_regime(self):
        row = fig2_data([10], [10_000], lambda_exact=2).iloc[0]
        assert row["phi_hat"] == pytest.approx(5.0, rel=0.05)

    def test_step_size_levels_off(self):
        table = fig2_data([100], [10, 100, 1000], lambda_exact=2)
        s = table.sort_values("lambda")["sigma_bar_star"].to_numpy()
        assert s[1] / s[0] >= 3.0
        assert s[2] / s[1] <= 3.0
        assert s[2] <= 100.0 / 0.5


class TestFig3:
    def test_rows_and_ranges(self, mc_source):
        table = fig3_data(lambdas=(2, 10), moment_source=mc_source)
        assert len(table) == 20
        assert list(table.columns) == [
            "lambda", "scheme", "theta", "m1", "m2", "e_Ae", "sigma_bar_star", "sigma_star",
        ]
        assert table["e_Ae"].between(1.0 / 37.0 - 1e-12, 36.0 / 37.0 + 1e-12).all()
        assert (table["sigma_star"] > 0.0).all()

    def test_mean_lies_on_the_level_set(self, mc_source):
        table = fig3_data(lambdas=(2,), schemes=("optimal",), moment_source=mc_source)
        f = 0.5 * (table["m1"] ** 2 + 36.0 * table["m2"] ** 2)
        np.testing.assert_allclose(f, 2.0, rtol=1e-12)


class TestExperimentConfig:
    def sphere_config(self, **overrides):
        params = {
            "figure": "fig5_6",
            "models": [{"type": "sphere", "dim": 10}],
            "lambdas": [4],
            "schemes": ["cma_log"],
            "c_m_values": [1.0],
            "sigma_bar_multipliers": [1.0],
            "T": 200,
            "replicates": 3,
            "seed": 5,
        }
        params.update(overrides)
        return ExperimentConfig(**params)

    def test_collects_every_problem(self):
        with pytest.raises(ConfigValidationError) as info:
            self.sphere_config(figure="fig9", T=201, lambdas=[])
        fields = {d["field"] for d in info.value.diagnostics}
        assert fields == {"figure", "T", "lambdas"}

    def test_rejects_linear_spectrum_for_fig56(self):
        with pytest.raises(ConfigValidationError, match="fig5_6 takes"):
            self.sphere_config(models=[{"type": "linear", "dim": 10}])

    def test_desk_scale_limit(self):
        with pytest.raises(ConfigValidationError, match="full_scale"):
            self.sphere_config(models=[{"type": "sphere", "dim": 1000}])
        assert self.sphere_config(models=[{"type": "sphere", "dim": 1000}], full_scale=True)

    def test_cells_and_budget(self):
        config = ExperimentConfig.fig56_defaults()
        assert config.figure is FigureKind.FIG5_6
        assert len(config.cells()) == 112
        with pytest.raises(ExperimentBudgetError):
            config.check_budget()
        ExperimentConfig.fig56_defaults(step_budget=1e10).check_budget()

    def test_estimated_steps(self):
        assert self.sphere_config().estimated_steps() == 3 * 200 * 4 * 10


class TestReplicates:
    def test_summary_quantiles(self):
        summary = summarize_replicates(list(range(1, 12)))
        assert (summary.median, summary.q10, summary.q90) == (6.0, 2.0, 10.0)
        assert len(summary.per_run) == 11

    def test_nan_replicates_ignored(self):
        summary = summarize_replicates([1.0, math.nan, 3.0, 2.0])
        assert summary.median == 2.0
        assert math.isnan(summary.per_run[1])

    def test_all_nan(self):
        assert math.isnan(summarize_replicates([math.nan]).median)

    def test_zero_weights_make_no_progress(self):
        estimate = empirical_nqg(QuadraticModel.sphere(5), WeightVector(w=np.zeros(4)), 1.0, 1.0, 20, seed=0)
        assert estimate.value == 0.0
        assert estimate.used == 10
        assert not estimate.truncated

    def test_odd_run_length(self):
        with pytest.raises(ConfigValidationError):
            empirical_nqg(QuadraticModel.sphere(5), make_cma_log(4), 1.0, 1.0, 21, seed=0)

    def test_seeded_runs_repeat(self):
        a = empirical_nqg(QuadraticModel.sphere(5), make_cma_log(6), 1.0, 1.0, 100, seed=3)
        b = empirical_nqg(QuadraticModel.sphere(5), make_cma_log(6), 1.0, 1.0, 100, seed=3)
        assert a == b
        assert a.value > 0.0


class TestFig56:
    def test_small_grid_is_deterministic(self, mc_source):
        config = TestExperimentConfig().sphere_config(c_m_values=[1.0, 10.0], theory_e_Ae="live")
        first = fig56_data(config, mc_source)
        second = fig56_data(config, mc_source)
        pd.testing.assert_frame_equal(first, second)
        assert list(first.columns) == [
            "spectrum", "N", "lambda", "scheme", "c_m", "multiplier", "sigma_bar", "sigma_bar_star",
            "median", "q10", "q90", "phi_hat", "truncated_runs", "phi_hat_live",
        ]
        assert len(first) == 2
        assert (first["q10"] <= first["median"]).all()
        assert (first["median"] <= first["q90"]).all()

    def test_budget_guard(self, mc_source):
        config = TestExperimentConfig().sphere_config(step_budget=100.0)
        with pytest.raises(ExperimentBudgetError):
            fig56_data(config, mc_source)


class TestBoundCheck:
    def test_rejects_oversized_instances(self):
        with pytest.raises(ConfigValidationError) as info:
            bound_check(N=21, lam=9, reps=10)
        assert {d["field"] for d in info.value.diagnostics} == {"n", "lambda", "reps"}

    @pytest.mark.slow
    def test_bound_holds(self, mc_source):
        table = bound_check(
            N=10, lam=4, scheme="cma_log", sigma_bar_multipliers=(0.5, 1.0), c_m_values=(1.0,),
            moment_source=mc_source, strict=True,
        )
        assert {"lhs", "rhs", "alpha", "vacuous", "pass"} <= set(table.columns)
        assert table["pass"].all()
