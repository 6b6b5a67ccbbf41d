"""Least-squares solvers, weighting rules, covariances and the reweighting loop."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import armcal.estimator as estimator_mod
from armcal import reference
from armcal.errors import RankDeficientError
from armcal.estimator import (
    DEFAULT_LAMBDA,
    DEFAULT_MAX_ITER,
    DEFAULT_REL_TOL,
    DEFAULT_SIGMA0,
    EstimationResult,
    confidence_intervals,
    irls,
    ols_estimate,
    optimal_weights,
    robust_weights,
    wls_estimate,
)
from armcal.noise import NoiseModel
from armcal.regressor import StackedSystem, stack_system
from armcal.simulator import noise_free_system, simulate_measurements

UM = 1e-6


def make_system(B, dp, sigma, columns=None):
    B = np.atleast_2d(np.asarray(B, dtype=float))
    axes = ("x", "y", "z")
    tags = tuple((1 + i // 3, 0, axes[i % 3]) for i in range(B.shape[0]))
    if columns is None:
        columns = tuple(f"c{j}" for j in range(B.shape[1]))
    return StackedSystem(B=B, dp=np.asarray(dp, float), sigma=np.asarray(sigma, float),
                         row_tags=tags, columns=columns)


def random_system(rng, m=20, n=4, sigma_range=(0.5, 3.0)):
    B = rng.normal(size=(m, n))
    sigma = rng.uniform(*sigma_range, size=m)
    x_true = rng.normal(size=n)
    dp = B @ x_true + rng.normal(size=m) * sigma
    return make_system(B, dp, sigma)


class TestScalarOracle:
    """Single-regressor model y = beta * x with x = (1, 1), sigma = (1, 2)."""

    def setup_method(self):
        self.sys = make_system([[1.0], [1.0]], [1.0, 2.0], [1.0, 2.0], columns=("beta",))

    def test_ols_estimate_is_average(self):
        res = ols_estimate(self.sys)
        assert res.x_hat[0] == pytest.approx(1.5, rel=1e-12)

    def test_ols_variance_closed_form(self):
        # (sum x^2 sigma^2) / (sum x^2)^2 = (1 + 4) / 4 = 5/4
        res = ols_estimate(self.sys)
        assert res.covariance[0, 0] == pytest.approx(1.25, rel=1e-12)
        assert res.ci3[0] == pytest.approx(3.0 * math.sqrt(1.25), rel=1e-12)

    def test_wls_estimate_weighted_mean(self):
        res = wls_estimate(self.sys, optimal_weights(self.sys.sigma))
        assert res.x_hat[0] == pytest.approx(1.2, rel=1e-12)

    def test_wls_variance_closed_form(self):
        # 1 / sum(x^2 / sigma^2) = 1 / (1 + 1/4) = 0.8
        res = wls_estimate(self.sys, optimal_weights(self.sys.sigma))
        assert res.covariance[0, 0] == pytest.approx(0.8, rel=1e-12)


class TestWeightRules:
    def test_optimal_weights_formula(self):
        assert_allclose(optimal_weights(np.array([1.0, 2.0])), [1.0, 0.5], rtol=0)
        assert_allclose(optimal_weights(np.array([1.0, 2.0]), a=2.0), [2.0, 1.0], rtol=0)

    def test_optimal_weights_may_exceed_one(self):
        w = optimal_weights(np.array([0.25]), a=1.0)
        assert w[0] == 4.0

    def test_optimal_weights_validation(self):
        with pytest.raises(ValueError, match="positive sigmas"):
            optimal_weights(np.array([1.0, 0.0]))
        with pytest.raises(ValueError, match="scale a"):
            optimal_weights(np.array([1.0]), a=0.0)

    def test_estimate_independent_of_weight_scale_a(self):
        rng = np.random.default_rng(42)
        sys = random_system(rng)
        x1 = wls_estimate(sys, optimal_weights(sys.sigma, a=1.0)).x_hat
        x2 = wls_estimate(sys, optimal_weights(sys.sigma, a=37.5)).x_hat
        assert_allclose(x2, x1, rtol=1e-12)

    def test_robust_weights_reference_value(self):
        w = robust_weights(np.array([150.0 * UM]), sigma0=10 * UM, lam=1.0)
        assert w[0] == pytest.approx(10.0 / 160.0, rel=1e-15)

    def test_robust_weights_cap_at_one(self):
        w = robust_weights(np.array([0.0, 10 * UM, 1.0]), sigma0=10 * UM, lam=1.0)
        assert w[0] == 1.0
        assert w[1] == pytest.approx(0.5, rel=1e-15)
        assert np.all((w > 0.0) & (w <= 1.0))

    def test_robust_weights_monotone_in_sigma(self):
        sigma = np.linspace(0.0, 500.0, 50) * UM
        w = robust_weights(sigma, sigma0=10 * UM, lam=1.0)
        assert np.all(np.diff(w) < 0.0)

    def test_lambda_zero_switches_weighting_off(self):
        w = robust_weights(np.array([17.0, 90.0, 1500.0]) * UM, sigma0=10 * UM, lam=0.0)
        assert_array_equal(w, np.ones(3))

    def test_robust_weights_validation(self):
        with pytest.raises(ValueError, match="sigma0"):
            robust_weights(np.array([1.0]), sigma0=0.0)
        with pytest.raises(ValueError, match="lambda"):
            robust_weights(np.array([1.0]), lam=-0.5)
        with pytest.raises(ValueError, match="non-negative"):
            robust_weights(np.array([-1.0]))


class TestCollapseIdentities:
    def test_unit_weights_reproduce_ols(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            sys = random_system(rng)
            res_o = ols_estimate(sys)
            res_w = wls_estimate(sys, np.ones(sys.n_equations))
            assert_allclose(res_w.x_hat, res_o.x_hat, rtol=1e-12)
            assert_allclose(res_w.covariance, res_o.covariance, rtol=1e-12)

    def test_iid_sandwich_collapses_to_scaled_inverse(self):
        rng = np.random.default_rng(3)
        B = rng.normal(size=(15, 3))
        sigma_bar = 0.7
        sys = make_system(B, rng.normal(size=15), np.full(15, sigma_bar))
        res = ols_estimate(sys)
        classic = sigma_bar**2 * np.linalg.inv(B.T @ B)
        assert_allclose(res.covariance, classic, rtol=1e-12)

    def test_weight_scale_invariance(self):
        rng = np.random.default_rng(11)
        sys = random_system(rng)
        w = rng.uniform(0.2, 1.0, size=sys.n_equations)
        res1 = wls_estimate(sys, w)
        res2 = wls_estimate(sys, 3.7 * w)
        assert_allclose(res2.x_hat, res1.x_hat, rtol=1e-12)
        assert_allclose(res2.covariance, res1.covariance, rtol=1e-12)


class TestCovariance:
    def test_optimal_weighting_matches_reduced_form(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            sys = random_system(rng)
            res = wls_estimate(sys, optimal_weights(sys.sigma))
            reduced = np.linalg.inv(sys.B.T @ (sys.B / sys.sigma[:, None] ** 2))
            assert_allclose(res.covariance, reduced, rtol=1e-10)

    def test_optimal_weighting_minimizes_trace(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            sys = random_system(rng)
            best = np.trace(wls_estimate(sys, optimal_weights(sys.sigma)).covariance)
            for _ in range(20):
                w = rng.uniform(0.05, 2.0, size=sys.n_equations)
                alt = np.trace(wls_estimate(sys, w).covariance)
                assert best <= alt * (1.0 + 1e-10)

    def test_covariance_symmetric_positive(self):
        rng = np.random.default_rng(8)
        sys = random_system(rng)
        res = wls_estimate(sys, robust_weights(sys.sigma, sigma0=0.5))
        assert_array_equal(res.covariance, res.covariance.T)
        assert np.all(np.linalg.eigvalsh(res.covariance) > 0.0)
        assert_allclose(res.ci3, 3.0 * np.sqrt(np.diag(res.covariance)), rtol=1e-15)

    def test_weighted_residual_orthogonality(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            sys = random_system(rng, m=40, n=5)
            w = rng.uniform(0.1, 1.0, size=40)
            res = wls_estimate(sys, w)
            Bw = sys.B * w[:, None]
            rw = w * res.residuals
            scale = np.linalg.norm(Bw) * np.linalg.norm(w * sys.dp)
            assert np.linalg.norm(Bw.T @ rw) <= 1e-10 * scale

    def test_empirical_covariance_matches_prediction(self):
        # 2000 redraws of a small heteroscedastic system: the scatter of the
        # weighted estimates should reproduce the analytic covariance trace
        rng = np.random.default_rng(42)
        B = rng.normal(size=(30, 3))
        sigma = rng.uniform(0.5, 3.0, size=30)
        x_true = np.array([1.0, -2.0, 0.5])
        clean = B @ x_true
        w = optimal_weights(sigma)
        estimates = []
        for _ in range(2000):
            sys = make_system(B, clean + rng.normal(size=30) * sigma, sigma)
            estimates.append(wls_estimate(sys, w).x_hat)
        empirical = np.cov(np.asarray(estimates), rowvar=False, ddof=1)
        predicted = np.linalg.inv(B.T @ (B / sigma[:, None] ** 2))
        assert np.trace(empirical) == pytest.approx(np.trace(predicted), rel=0.15)


class TestRankHandling:
    def test_duplicate_column_raises_named_direction(self):
        B = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        sys = make_system(B, np.zeros(3), np.ones(3), columns=("ka", "kb"))
        with pytest.raises(RankDeficientError, match="unidentifiable") as exc:
            ols_estimate(sys)
        assert exc.value.code == "E_RANK_DEFICIENT"
        assert len(exc.value.directions) == 1
        assert "ka" in exc.value.directions[0]
        assert "kb" in exc.value.directions[0]

    def test_near_deficiency_warns_with_weakest_direction(self):
        B = np.array([[1.0, 0.0], [0.0, 5e-9], [0.0, 0.0]])
        sys = make_system(B, np.zeros(3), np.ones(3), columns=("ka", "kb"))
        with pytest.warns(RuntimeWarning, match="weakest direction"):
            res = ols_estimate(sys)
        assert res.x_hat.shape == (2,)

    def test_zero_weight_rows_drop_out(self):
        rng = np.random.default_rng(4)
        B = rng.normal(size=(6, 2))
        dp = rng.normal(size=6)
        sigma = rng.uniform(0.5, 1.5, size=6)
        full = make_system(B, dp, sigma)
        w = np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0])
        res = wls_estimate(full, w)
        reduced = make_system(B[:4], dp[:4], sigma[:4])
        res_reduced = wls_estimate(reduced, np.ones(4))
        assert_allclose(res.x_hat, res_reduced.x_hat, rtol=1e-12)

    def test_all_zero_weights_rejected(self):
        sys = make_system(np.ones((3, 1)), np.zeros(3), np.ones(3))
        with pytest.raises(ValueError, match="zero weight"):
            wls_estimate(sys, np.zeros(3))

    def test_weight_vector_validated(self):
        sys = make_system(np.ones((3, 1)), np.zeros(3), np.ones(3))
        with pytest.raises(ValueError, match="length"):
            wls_estimate(sys, np.ones(2))
        with pytest.raises(ValueError, match="finite and non-negative"):
            wls_estimate(sys, np.array([1.0, -1.0, 1.0]))


class TestEstimationResult:
    def test_confidence_interval_arithmetic(self):
        res = EstimationResult(
            parameters=("k",),
            x_hat=np.array([0.3]),
            covariance=np.array([[1e-4]]),
            ci3=np.array([0.03]),
            residuals=np.zeros(2),
            method="wls",
            weights=np.ones(2),
            sigma=np.ones(2),
        )
        assert_allclose(confidence_intervals(res), [[0.27, 0.33]], rtol=1e-12)

    def test_residuals_definition(self):
        rng = np.random.default_rng(17)
        sys = random_system(rng)
        res = ols_estimate(sys)
        assert_allclose(res.residuals, sys.B @ res.x_hat - sys.dp, atol=1e-15)
        assert res.method == "ols"
        assert_array_equal(res.weights, np.ones(sys.n_equations))


class TestNoiseFreeRecovery:
    def test_ols_recovers_truth_exactly(self, nominal_model):
        design = reference.study_design(seed=0)
        sys = noise_free_system(design, nominal_model)
        res = ols_estimate(sys)
        assert_allclose(res.x_hat, design.ground_truth.values, rtol=1e-10)
        assert np.max(np.abs(res.residuals)) < 1e-15


@pytest.fixture(scope="module")
def noisy_system(nominal_model):
    design = reference.study_design(seed=6)
    records = simulate_measurements(design, nominal_model)
    return stack_system(records, nominal_model, design.cmap, design.noise)


class TestIRLS:
    def test_single_pass_equals_robust_wls(self, noisy_system):
        res = irls(noisy_system, rel_tol=np.inf)
        direct = wls_estimate(
            noisy_system, robust_weights(noisy_system.sigma, DEFAULT_SIGMA0, DEFAULT_LAMBDA)
        )
        assert_array_equal(res.x_hat, direct.x_hat)
        assert_array_equal(res.covariance, direct.covariance)
        assert res.method == "irls"
        assert res.converged
        assert res.stop_reason == "single_pass"
        assert len(res.iterations) == 1

    def test_converges_on_bundled_study(self, noisy_system):
        res = irls(noisy_system)
        assert res.converged
        assert res.stop_reason == "tolerance"
        assert len(res.iterations) <= 10
        snaps = res.iterations
        assert [s.index for s in snaps] == list(range(1, len(snaps) + 1))
        assert_array_equal(snaps[-1].x_hat, res.x_hat)
        assert np.all(snaps[-1].ci3 > 0.0)
        # stopping rule: the last recorded step moved less than rel_tol
        prev, last = snaps[-2], snaps[-1]
        change = np.max(np.abs(last.x_hat - prev.x_hat) / np.abs(prev.x_hat))
        assert change < DEFAULT_REL_TOL

    def test_homoscedastic_second_iteration_is_quiet(self, nominal_model):
        # noise at the instrument's claimed precision on every axis: the
        # re-learnt weights are nearly uniform and barely move the estimate
        uniform = NoiseModel.uniform(range(1, 16), 10 * UM)
        design = reference.study_design(seed=9, noise=uniform)
        records = simulate_measurements(design, nominal_model)
        sys = stack_system(records, nominal_model, design.cmap, design.noise)
        res = irls(sys, rel_tol=0.0, max_iter=2)  # force exactly two iterations
        first, second = res.iterations
        change = np.max(np.abs(second.x_hat - first.x_hat) / np.abs(first.x_hat))
        assert change < 1e-3
        w2 = res.weights
        assert np.max(w2) / np.min(w2) < 2.0  # no row dominates

    def test_max_iter_flagged(self, noisy_system):
        res = irls(noisy_system, rel_tol=0.0, max_iter=3)
        assert len(res.iterations) == 3
        assert not res.converged
        assert res.stop_reason == "max_iter"

    def test_rank_loss_returns_last_valid_iterate(self, noisy_system, monkeypatch):
        real_solve = estimator_mod._weighted_solve
        calls = {"n": 0}

        def failing_solve(sys, weights, method):
            calls["n"] += 1
            if calls["n"] >= 2:
                raise RankDeficientError("synthetic rank collapse")
            return real_solve(sys, weights, method)

        monkeypatch.setattr(estimator_mod, "_weighted_solve", failing_solve)
        res = irls(noisy_system, rel_tol=0.0, max_iter=5)
        assert len(res.iterations) == 1
        assert not res.converged
        assert res.stop_reason == "rank_loss"

    def test_first_iteration_rank_failure_propagates(self):
        B = np.array([[1.0, 1.0], [2.0, 2.0], [1.0, 1.0], [2.0, 2.0]])
        sys = StackedSystem(
            B=B,
            dp=np.zeros(4),
            sigma=np.ones(4),
            row_tags=((1, 0, "x"), (1, 0, "x"), (1, 0, "y"), (1, 0, "y")),
            columns=("ka", "kb"),
        )
        with pytest.raises(RankDeficientError):
            irls(sys)

    def test_replicate_starved_groups_rejected(self):
        # each (config, axis) group holds a single row: nothing to re-estimate
        sys = make_system(np.ones((3, 1)), np.zeros(3), np.ones(3))
        with pytest.raises(ValueError, match=">= 2 rows"):
            irls(sys)

    def test_max_iter_validated(self, noisy_system):
        with pytest.raises(ValueError, match="max_iter"):
            irls(noisy_system, max_iter=0)

    def test_default_constants(self):
        assert DEFAULT_LAMBDA == 1.0
        assert DEFAULT_REL_TOL == 1e-3
        assert DEFAULT_MAX_ITER == 20
