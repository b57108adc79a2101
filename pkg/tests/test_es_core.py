"""Tests for the mean update, scale-invariant runs and Monte-Carlo quality gain."""

import numpy as np
import pytest

from qgain.errors import NonFiniteValueError, SimulationError, ZeroGradientError
from qgain.tools.es_core import (
    EsState,
    normalized_quality_gain_mc,
    one_step_quality_gain_mc,
    run_scale_invariant,
    step,
    update_mean,
)
from qgain.tools.quadratic import QuadraticModel, covariance_sqrt, covariance_transform, make_model
from qgain.tools.theory import TheoryInputs, error_bound, phi_hat
from qgain.tools.weights import WeightVector, lipschitz_bounds, make_cma_log


def ellipsoid(dim=20):
    return make_model({"type": "ellipsoid", "dim": dim, "alpha": 100.0, "rotate": True, "rotation_seed": 5})


class TestEsState:
    def test_non_finite_mean(self):
        with pytest.raises(NonFiniteValueError):
            EsState.create([1.0, np.nan], 1.0, 1.0, seed=0)

    @pytest.mark.parametrize("sigma, c_m", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
    def test_non_positive_parameters(self, sigma, c_m):
        with pytest.raises(SimulationError):
            EsState.create(np.ones(3), sigma, c_m, seed=0)


class TestUpdateMean:
    def test_zero_weights_leave_mean(self, rng):
        model = QuadraticModel.sphere(4)
        m = rng.standard_normal(4)
        z = rng.standard_normal((5, 4))
        out = update_mean(m, 0.5, 1.0, model, WeightVector(w=np.zeros(5)), z)
        np.testing.assert_array_equal(out, m)

    def test_monotone_transform_changes_nothing(self, rng):
        model = ellipsoid(6)
        weights = make_cma_log(8)
        m = rng.standard_normal(6)
        z = rng.standard_normal((8, 6))
        plain = update_mean(m, 0.3, 1.0, model, weights, z)
        np.testing.assert_array_equal(update_mean(m, 0.3, 1.0, model, weights, z, transform=np.exp), plain)

    def test_candidate_order_is_irrelevant(self, rng):
        model = ellipsoid(6)
        weights = make_cma_log(8)
        m = rng.standard_normal(6)
        z = rng.standard_normal((8, 6))
        shuffled = z[rng.permutation(8)]
        np.testing.assert_allclose(
            update_mean(m, 0.3, 1.0, model, weights, shuffled), update_mean(m, 0.3, 1.0, model, weights, z),
            atol=1e-12,
        )

    def test_covariance_matches_transformed_problem(self, rng):
        model = ellipsoid(5).with_optimum(rng.standard_normal(5))
        q = np.linalg.qr(rng.standard_normal((5, 5)))[0]
        C = (q * np.linspace(0.5, 4.0, 5)) @ q.T
        half, inv_half = covariance_sqrt(C)
        transformed = covariance_transform(model, C)
        weights = make_cma_log(10)
        m = rng.standard_normal(5)
        z = rng.standard_normal((10, 5))
        direct = update_mean(m, 0.2, 1.0, model, weights, z, cov_sqrt=half)
        seen = update_mean(inv_half @ m, 0.2, 1.0, transformed, weights, z)
        np.testing.assert_allclose(inv_half @ direct, seen, atol=1e-10)

    def test_non_finite_objective(self):
        model = QuadraticModel.sphere(2)
        with pytest.raises(NonFiniteValueError):
            update_mean(np.ones(2), 1.0, 1.0, model, make_cma_log(3), np.full((3, 2), np.inf))

    def test_step_is_deterministic(self):
        model = ellipsoid(4)
        weights = make_cma_log(6)
        a = step(EsState.create(np.ones(4), 0.1, 1.0, seed=11), model, weights)
        b = step(EsState.create(np.ones(4), 0.1, 1.0, seed=11), model, weights)
        np.testing.assert_array_equal(a.m, b.m)
        assert a.t == 1


class TestScaleInvariantRun:
    @pytest.mark.parametrize("alpha", [0.5, 2.0, 10.0])
    def test_scale_invariance(self, alpha):
        model = ellipsoid(20)
        weights = make_cma_log(10)
        m0 = np.linspace(-1.0, 1.0, 20)
        base = run_scale_invariant(EsState.create(m0, 1.0, 1.0, seed=3), model, weights, 1.0, 50)
        scaled = run_scale_invariant(EsState.create(alpha * m0, 1.0, 1.0, seed=3), model, weights, 1.0, 50)
        np.testing.assert_allclose(scaled.f / base.f, alpha ** 2, rtol=1e-9)
        np.testing.assert_allclose(scaled.g_m, base.g_m, rtol=1e-9)

    def test_sigma_follows_normalization(self):
        model = ellipsoid(8)
        run = run_scale_invariant(EsState.create(np.ones(8), 1.0, 2.0, seed=1), model, make_cma_log(6), 0.7, 5)
        np.testing.assert_allclose(run.sigma, 0.7 * run.grad_norm / (2.0 * model.trace), rtol=1e-14)

    def test_progress_matches_f(self):
        run = run_scale_invariant(
            EsState.create(np.ones(6), 1.0, 1.0, seed=2), ellipsoid(6), make_cma_log(6), 1.0, 20
        )
        np.testing.assert_allclose(run.progress, 1.0 - run.f[1:] / run.f[:-1], rtol=1e-10, atol=1e-14)

    def test_rescaling_avoids_underflow(self):
        model = QuadraticModel.sphere(5)
        weights = make_cma_log(10)
        plain = run_scale_invariant(EsState.create(np.ones(5), 1.0, 1.0, seed=8), model, weights, 2.0, 10_000)
        assert plain.truncated
        assert plain.iterations < 10_000

        kept = run_scale_invariant(
            EsState.create(np.ones(5), 1.0, 1.0, seed=8), model, weights, 2.0, 10_000, rescale=True
        )
        assert not kept.truncated
        assert kept.iterations == 10_000
        assert kept.log10_f[-1] < -300.0
        assert np.all(np.isfinite(kept.log10_f))

    def test_to_frame_records_selected_steps(self):
        run = run_scale_invariant(
            EsState.create(np.ones(4), 1.0, 1.0, seed=4), ellipsoid(4), make_cma_log(4), 1.0, 50,
            record=lambda t: t % 10 == 0,
        )
        frame = run.to_frame()
        assert list(frame.columns) == ["t", "f", "grad_norm", "g_m", "sigma", "log10_f"]
        assert list(frame["t"]) == [0, 10, 20, 30, 40]

    def test_invalid_arguments(self):
        state = EsState.create(np.ones(3), 1.0, 1.0, seed=0)
        with pytest.raises(SimulationError):
            run_scale_invariant(state, QuadraticModel.sphere(3), make_cma_log(4), 0.0, 10)
        with pytest.raises(SimulationError):
            run_scale_invariant(state, QuadraticModel.sphere(3), make_cma_log(4), 1.0, 0)


class TestQualityGainMonteCarlo:
    def test_too_few_reps(self):
        with pytest.raises(SimulationError, match="reps"):
            one_step_quality_gain_mc(np.ones(3), 0.1, 1.0, QuadraticModel.sphere(3), make_cma_log(4), 999, seed=0)

    def test_mean_at_optimum(self):
        with pytest.raises(ZeroGradientError):
            one_step_quality_gain_mc(np.zeros(3), 0.1, 1.0, QuadraticModel.sphere(3), make_cma_log(4), 1000, seed=0)

    def test_negative_step_size(self):
        with pytest.raises(SimulationError):
            one_step_quality_gain_mc(np.ones(3), -0.1, 1.0, QuadraticModel.sphere(3), make_cma_log(4), 1000, seed=0)

    def test_same_seed_same_estimate(self):
        args = (np.ones(4), 0.2, 1.0, ellipsoid(4), make_cma_log(6), 2000)
        assert one_step_quality_gain_mc(*args, seed=9) == one_step_quality_gain_mc(*args, seed=9)

    def test_small_step_within_bound(self, moments4, rng):
        model = QuadraticModel.sphere(10)
        weights = make_cma_log(4)
        m = rng.standard_normal(10)
        sigma_bar, c_m = 0.5, 1.0
        estimate = normalized_quality_gain_mc(model, m, sigma_bar, c_m, weights, 4000, seed=21)
        inputs = TheoryInputs.from_model(model, weights, moments4, sigma_bar, c_m, m=m)
        bound = error_bound(inputs, lipschitz_bounds(weights)).bound
        assert abs(estimate.mean - phi_hat(inputs)) <= bound + 3.0 * estimate.stderr
        assert estimate.reps == 4000
