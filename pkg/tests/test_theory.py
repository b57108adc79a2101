"""Tests for the asymptotic quality gain, optimal step-sizes and weights, and the error bound."""

import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from qgain.errors import TheoryError
from qgain.tools.order_stats import MomentMethod, build_moment_table
from qgain.tools.quadratic import QuadraticModel
from qgain.tools.theory import (
    TheoryInputs,
    error_bound,
    g_alpha,
    optimal_weights_general,
    parse_lambda_rule,
    phi_hat,
    phi_hat_matrix,
    phi_inf,
    predict,
    scaling_condition_check,
    sigma_bar_star_general,
    sigma_bar_star_sphere,
    weights_for_family,
)
from qgain.tools.weights import (
    LipschitzConstants,
    LipschitzMethod,
    WeightVector,
    lipschitz_bounds,
    make_cma_log,
    make_optimal,
    make_truncation,
)

from conftest import mc_table


def unit_inputs(weights, moments, sigma_bar=1.0, e_Ae=0.5, c_m=1.0, **kwargs):
    return TheoryInputs(
        sigma_bar=sigma_bar, c_m=c_m, weights=weights, moments=moments,
        e_Ae=e_Ae, tr_A2=1.0, d1_hat=1.0, **kwargs,
    )


class TestSphereLimit:
    def test_sigma_star_maximizes_phi_inf(self):
        weights = make_truncation(10, 2)
        e1 = build_moment_table(10).e1
        found = minimize_scalar(
            lambda s: -phi_inf(s, weights, e1), bounds=(0.0, 10.0), method="bounded", options={"xatol": 1e-10}
        )
        assert found.x == pytest.approx(sigma_bar_star_sphere(weights, e1), abs=1e-6)

    def test_optimal_weights_large_lambda_limit(self):
        e1 = build_moment_table(10_000, MomentMethod.BLOM).e1
        weights = make_optimal(e1)
        ratio = sigma_bar_star_sphere(weights, e1) / weights.mu_w
        assert ratio == pytest.approx(math.sqrt(math.pi / 2.0), rel=0.03)

    def test_optimal_beats_truncation(self):
        e1 = build_moment_table(20).e1
        best = sigma_bar_star_sphere(make_optimal(e1), e1)
        opt = phi_inf(best, make_optimal(e1), e1)
        trunc = make_truncation(20, 5)
        assert opt > phi_inf(sigma_bar_star_sphere(trunc, e1), trunc, e1)


class TestPhiHat:
    @pytest.mark.parametrize("e_Ae", [0.0, 0.3, 1.0])
    def test_sum_and_matrix_forms_agree(self, moments10, e_Ae):
        weights = make_cma_log(10)
        s = 1.7
        inputs = unit_inputs(weights, moments10, sigma_bar=s, e_Ae=e_Ae)
        matrix = phi_hat_matrix(s * weights.w, moments10.e1, moments10.e2, e_Ae)
        assert phi_hat(inputs) == pytest.approx(matrix, abs=1e-12)

    def test_lambda_two_antisymmetric_weights(self, moments2):
        weights = WeightVector(w=[0.5, -0.5])
        inputs = unit_inputs(weights, moments2, sigma_bar=0.8, e_Ae=1.0)
        matrix = phi_hat_matrix(0.8 * weights.w, moments2.e1, moments2.e2, 1.0)
        assert phi_hat(inputs) == pytest.approx(matrix, abs=1e-12)

    def test_reduces_to_sphere_limit_without_curvature(self):
        moments = build_moment_table(8)
        weights = make_cma_log(8)
        inputs = unit_inputs(weights, moments, sigma_bar=1.2, e_Ae=0.0, allow_large_lambda=True)
        assert phi_hat(inputs) == pytest.approx(phi_inf(1.2, weights, moments.e1), abs=1e-14)

    def test_needs_product_moments(self):
        with pytest.raises(TheoryError):
            phi_hat(unit_inputs(make_cma_log(6), build_moment_table(6)))

    def test_large_lambda_substitute(self):
        moments = build_moment_table(6)
        weights = make_cma_log(6)
        inputs = unit_inputs(weights, moments, sigma_bar=1.0, e_Ae=1.0, allow_large_lambda=True)
        assert phi_hat(inputs) == pytest.approx(-np.dot(weights.w, moments.e1) * (1.0 + 0.5 * np.dot(weights.w, moments.e1)))


class TestTheoryInputs:
    def test_negative_sigma_bar(self, moments4):
        with pytest.raises(TheoryError):
            unit_inputs(make_cma_log(4), moments4, sigma_bar=-1.0)

    def test_non_positive_c_m(self, moments4):
        with pytest.raises(TheoryError):
            unit_inputs(make_cma_log(4), moments4, c_m=0.0)

    def test_lambda_mismatch(self, moments4):
        with pytest.raises(TheoryError):
            unit_inputs(make_cma_log(5), moments4)

    def test_e_Ae_above_d1(self, moments4):
        with pytest.raises(TheoryError):
            TheoryInputs(1.0, 1.0, make_cma_log(4), moments4, e_Ae=0.5, tr_A2=0.1, d1_hat=0.2)

    def test_from_model_uses_worst_case(self, moments4):
        model = QuadraticModel.cigar(10, 100.0)
        inputs = TheoryInputs.from_model(model, make_cma_log(4), moments4, 1.0, 1.0)
        assert inputs.e_Ae == pytest.approx(1.0 / model.trace)
        assert inputs.d1_hat == pytest.approx(100.0 / model.trace)


class TestOptimalWeightsGeneral:
    def test_zero_curvature_gives_optimal_weights(self):
        moments = build_moment_table(12)
        result = optimal_weights_general(moments, 0.0)
        np.testing.assert_allclose(result.weights.w, make_optimal(moments.e1).w, atol=1e-15)
        assert result.sigma_bar == pytest.approx(np.abs(moments.e1).sum())
        assert result.exact

    def test_small_curvature_is_continuous(self, moments10):
        w_bar = optimal_weights_general(moments10, 1e-6).w_bar
        e1 = moments10.e1
        cosine = np.dot(w_bar, -e1) / (np.linalg.norm(w_bar) * np.linalg.norm(e1))
        assert cosine >= 0.999999

    @pytest.mark.parametrize("e_Ae", [0.05, 0.2])
    def test_beats_random_probes(self, moments20, e_Ae, rng):
        result = optimal_weights_general(moments20, e_Ae)
        value = phi_hat_matrix(result.w_bar, moments20.e1, moments20.e2, e_Ae)
        assert value == pytest.approx(result.optimal_value, rel=1e-10)
        for _ in range(500):
            probe = result.w_bar + 0.3 * rng.standard_normal(20)
            assert phi_hat_matrix(probe, moments20.e1, moments20.e2, e_Ae) < value

    def test_residual_and_stationarity(self, moments10):
        result = optimal_weights_general(moments10, 0.4)
        assert result.residual <= 1e-8 * np.linalg.norm(moments10.e1)
        system = 0.6 * np.eye(10) + 0.4 * moments10.e2
        np.testing.assert_allclose(system @ result.w_bar, -moments10.e1, atol=1e-9)

    def test_beyond_lambda_exact_falls_back(self, moments20):
        result = optimal_weights_general(moments20, 0.1, lambda_exact=10)
        assert not result.exact
        np.testing.assert_allclose(result.w_bar, -moments20.e1)

    def test_needs_product_moments(self):
        with pytest.raises(TheoryError):
            optimal_weights_general(build_moment_table(6), 0.1)


class TestSigmaBarStar:
    def test_exact_maximizes_phi_hat(self, moments10):
        weights = make_cma_log(10)
        inputs = unit_inputs(weights, moments10, e_Ae=0.1)
        found = minimize_scalar(
            lambda s: -phi_hat(inputs.with_sigma_bar(s)), bounds=(0.0, 20.0), method="bounded",
            options={"xatol": 1e-10},
        )
        assert sigma_bar_star_general(weights, moments10, 0.1) == pytest.approx(found.x, rel=1e-6)

    def test_large_lambda_closed_form(self, moments10):
        weights = make_cma_log(10)
        e = 0.25
        m1 = -np.dot(weights.w, moments10.e1)
        expected = (1.0 / e) * weights.mu_w * m1 / (1.0 / e - 1.0 + weights.mu_w * m1 ** 2)
        got = sigma_bar_star_general(weights, moments10, e, mode="large_lambda")
        assert got == pytest.approx(expected, rel=1e-12)

    @pytest.mark.slow
    def test_large_lambda_close_to_exact(self):
        moments = mc_table(100, samples=100_000)
        weights = make_cma_log(100)
        exact = sigma_bar_star_general(weights, moments, 0.5)
        approx = sigma_bar_star_general(weights, moments, 0.5, mode="large_lambda")
        assert approx == pytest.approx(exact, rel=0.05)

    def test_unknown_mode(self, moments4):
        with pytest.raises(TheoryError):
            sigma_bar_star_general(make_cma_log(4), moments4, 0.1, mode="guess")


class TestErrorBound:
    LIP = LipschitzConstants(0.3, 0.2, 0.1, LipschitzMethod.ANALYTIC_BOUND)

    def sphere_inputs(self, sigma_bar=1.0, c_m=1.0):
        model = QuadraticModel.sphere(10)
        moments = build_moment_table(4)
        return TheoryInputs.from_model(model, make_cma_log(4), moments, sigma_bar, c_m)

    def test_matches_hand_evaluation(self):
        s, c, lam = 1.0, 1.0, 4
        tr2 = d1 = 0.1
        alpha = s / c * math.sqrt(tr2)
        ln = math.log(1.0 / alpha)
        G = min(1.0, alpha * (2.0 + math.sqrt(2.0 * ln / math.pi) + d1 * ln / (math.sqrt(2.0 * math.pi * tr2))))
        l1, l2, l3 = self.LIP.as_tuple()
        expected = (
            s * lam * l1 * (math.sqrt(2.0 / math.pi) * G + alpha / (2.0 * math.sqrt(math.pi)))
            + s * c * lam * l2 * (G / math.sqrt(2.0) + alpha / (2.0 * math.sqrt(2.0 * math.pi))) * alpha
            + s * c * lam * (lam - 1) * l3 * (math.sqrt(2.0 / math.pi) * G + alpha / (math.pi * math.sqrt(2.0))) * alpha
        )
        result = error_bound(self.sphere_inputs(s, c), self.LIP)
        assert result.alpha == pytest.approx(alpha)
        assert result.g_alpha == pytest.approx(G)
        assert result.bound == pytest.approx(expected, rel=1e-12)
        assert not result.vacuous

    def test_both_forms_agree_below_one(self):
        inputs = self.sphere_inputs(sigma_bar=0.5, c_m=2.0)
        theorem = error_bound(inputs, self.LIP, form="theorem").bound
        assert error_bound(inputs, self.LIP, form="lemma").bound == pytest.approx(theorem, rel=1e-12)

    def test_vacuous_when_alpha_saturates(self):
        result = error_bound(self.sphere_inputs(sigma_bar=10.0), self.LIP)
        assert result.alpha == 1.0
        assert result.g_alpha == 1.0
        assert result.vacuous

    def test_zero_step_size(self):
        result = error_bound(self.sphere_inputs(sigma_bar=0.0), self.LIP)
        assert result.bound == 0.0
        assert not result.vacuous

    def test_unknown_form(self):
        with pytest.raises(TheoryError):
            error_bound(self.sphere_inputs(), self.LIP, form="corollary")

    def test_g_alpha_endpoints(self):
        assert g_alpha(0.0, 0.1, 0.1) == 0.0
        assert g_alpha(1.0, 0.1, 0.1) == 1.0
        assert g_alpha(2.0, 0.1, 0.1) == 1.0
        assert 0.0 < g_alpha(1e-4, 0.1, 0.1) < g_alpha(1e-2, 0.1, 0.1) < 1.0

    def test_predict_bundles_everything(self, moments4):
        model = QuadraticModel.sphere(10)
        weights = make_cma_log(4)
        inputs = TheoryInputs.from_model(model, weights, moments4, 1.0, 1.0)
        prediction = predict(inputs, lipschitz_bounds(weights))
        assert prediction.phi_hat == pytest.approx(phi_hat(inputs))
        assert prediction.sigma_bar_star == pytest.approx(sigma_bar_star_general(weights, moments4, 0.1))
        assert prediction.error_bound == pytest.approx(error_bound(inputs, lipschitz_bounds(weights)).bound)


class TestLambdaRules:
    def test_power(self):
        assert parse_lambda_rule("power:0.5")(100) == 10
        assert parse_lambda_rule("power:0.2:8")(100_000) == 80

    def test_linear_and_constant(self):
        assert parse_lambda_rule("linear")(7) == 7
        assert parse_lambda_rule("constant:5")(1000) == 5

    def test_callable_passes_through(self):
        rule = lambda n: 3 * n  # noqa: E731
        assert parse_lambda_rule(rule) is rule

    @pytest.mark.parametrize("rule", ["cubic", "power", "power:x", "constant:"])
    def test_bad_rules(self, rule):
        with pytest.raises(TheoryError):
            parse_lambda_rule(rule)

    def test_weights_for_family(self):
        weights = weights_for_family("truncation:4", 20)
        assert weights.mu == 5
        assert weights_for_family("cma_log", 20).label == "cma_log"


class TestScalingConditionCheck:
    def test_slow_growth_satisfies_curvature_condition(self):
        report = scaling_condition_check(
            [100, 1000, 10_000, 100_000], "power:0.2:8", {"type": "sphere"}, "truncation:4"
        )
        assert list(report.table.columns) == [
            "N", "lambda", "mu", "d1_hat", "sqrt_tr2", "lambda_sq_d1", "lipschitz_term",
        ]
        assert list(report.table["lambda"]) == [20, 31, 50, 80]
        assert report.d1_ratio_decreasing

    def test_linear_growth_fails(self):
        report = scaling_condition_check([10, 100, 1000], "linear", {"type": "sphere"}, "truncation:4")
        assert not report.d1_ratio_decreasing

    def test_epsilon_range(self):
        with pytest.raises(TheoryError):
            scaling_condition_check([10, 100], "linear", {"type": "sphere"}, "cma_log", epsilon=1.0)
