"""Closed-form marginal likelihood and the ECM fitting loop."""

import warnings
from dataclasses import replace

import numpy as np
import pytest

from poismult.data import Dataset, LongRecord
from poismult.design import CovariateTerm, ModelSpec
from poismult.exceptions import DegenerateVarianceWarning, ModelSpecError
from poismult.gamma_poisson import (GammaPoissonParams, cm_step_beta, e_step,
                                    evaluate_params, fit_ecm, marginal_loglik,
                                    profiled_marginal_loglik)
from poismult.oracle import quadrature_marginal
from poismult.special import digamma

from conftest import simulate_grouped


def single_cell_dataset(y1: int, y2: int) -> Dataset:
    recs = [LongRecord("o1", "1", y1, {}, "g1"),
            LongRecord("o1", "2", y2, {}, "g1")]
    return Dataset(recs, ["1", "2"])


INTERCEPT_SPEC = ModelSpec(terms=(), random_effects="gamma_per_category")


class TestMarginalLoglik:
    def test_single_cell_value(self):
        # one group, one observation, two categories, both counts zero,
        # unit rates and unit variance: the baseline factor contributes
        # exp(-1) and the mixed factor integrates to 1/2
        ds = single_cell_dataset(0, 0)
        params = GammaPoissonParams(gamma=np.zeros(1), beta=np.ones(1),
                                    log_delta=np.zeros(1), spec=INTERCEPT_SPEC)
        want = -1.0 - np.log(2.0)
        assert abs(marginal_loglik(ds, params) - want) < 1e-12

    def test_single_cell_general_counts(self):
        # direct evaluation of the one-dimensional mixture sum:
        # P(y2) = C(a+y2-1, y2) * (1/(1+b))^a * (b/(1+b))^y2 for S=1
        from scipy.special import gammaln
        ds = single_cell_dataset(3, 2)
        b = 0.7
        params = GammaPoissonParams(gamma=np.zeros(1), beta=np.array([b]),
                                    log_delta=np.zeros(1), spec=INTERCEPT_SPEC)
        a = 1.0 / b
        want = (-1.0 + 3 * 0.0 - gammaln(4.0))   # Poisson(1) at 3
        want += (gammaln(a + 2) - gammaln(a) - gammaln(3.0)
                 + a * np.log(a / (a + 1)) + 2 * np.log(1 / (a + 1)))
        assert abs(marginal_loglik(ds, params) - want) < 1e-12

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_matches_quadrature(self, seed, grouped_sim):
        ds, spec, theta = grouped_sim(I=2, J=2, seed=seed)
        rng = np.random.default_rng(seed)
        params = GammaPoissonParams(
            gamma=rng.normal(0, 0.5, 3), beta=rng.uniform(0.2, 3.0, 2),
            log_delta=rng.normal(0, 0.3, 4), spec=spec)
        closed = marginal_loglik(ds, params)
        quad = quadrature_marginal(ds, params, model="poisson_surrogate",
                                   rtol=1e-11)
        assert abs(closed - quad) < 1e-9 * max(1.0, abs(quad))

    def test_tiny_variance_is_stable(self, grouped_sim):
        ds, spec, theta = grouped_sim(I=3, J=2, seed=9)
        params = GammaPoissonParams(
            gamma=np.array([0.5, -0.3, 0.8]), beta=np.array([1e-8, 1e-8]),
            log_delta=np.zeros(6), spec=spec)
        val = marginal_loglik(ds, params)
        assert np.isfinite(val)

    def test_requires_spec(self):
        ds = single_cell_dataset(1, 1)
        params = GammaPoissonParams(gamma=np.zeros(1), beta=np.ones(1),
                                    log_delta=np.zeros(1), spec=None)
        with pytest.raises(ModelSpecError, match="spec"):
            marginal_loglik(ds, params)


class TestEStep:
    def test_posterior_mean_formula(self):
        ds = single_cell_dataset(4, 7)
        b = 0.5
        params = GammaPoissonParams(gamma=np.zeros(1), beta=np.array([b]),
                                    log_delta=np.zeros(1), spec=INTERCEPT_SPEC)
        lam, chi = e_step(ds, params)
        a = 1.0 / b
        assert lam.shape == (1, 2)
        # baseline column is the fixed factor
        assert lam[0, 0] == 1.0 and chi[0, 0] == 0.0
        assert abs(lam[0, 1] - (7 + a) / (1 + a)) < 1e-12
        assert abs(chi[0, 1] - (digamma(7 + a) - np.log(1 + a))) < 1e-12

    def test_jensen_inequality(self, grouped_sim):
        # E log lambda < log E lambda for a non-degenerate posterior
        ds, spec, theta = grouped_sim(I=4, J=3, seed=11)
        params = GammaPoissonParams(
            gamma=np.array([0.2, -0.1, 0.4]), beta=np.array([0.8, 1.2]),
            log_delta=np.zeros(12), spec=spec)
        lam, chi = e_step(ds, params)
        assert np.all(chi[:, 1:] < np.log(lam[:, 1:]))


class TestCmStepBeta:
    def test_recovers_variance_from_exact_posterior_statistics(self):
        # population values of a Gamma(shape 2, scale 1/2) factor:
        # E lambda = 1, E log lambda = psi(2) + log(1/2); the conditional
        # maximizer must land on variance 1/2
        I = 40
        lam = np.column_stack([np.ones(I), np.full(I, 1.0)])
        chi = np.column_stack([np.zeros(I),
                               np.full(I, digamma(2.0) + np.log(0.5))])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            b = cm_step_beta(lam, chi, q=1)
        assert abs(b - 0.5) < 1e-6

    def test_degenerate_statistics_warn(self):
        # a posterior concentrated at 1 with no spread pushes the
        # variance to the search floor
        I = 20
        lam = np.column_stack([np.ones(I), np.ones(I)])
        chi = np.column_stack([np.zeros(I), np.zeros(I)])
        with pytest.warns(DegenerateVarianceWarning):
            b = cm_step_beta(lam, chi, q=1)
        assert b <= 1e-8 * (1 + 1e-6)


class TestFitEcm:
    def test_trace_is_nondecreasing(self, grouped_sim):
        ds, spec, theta = grouped_sim(I=12, J=4, seed=31)
        fit = fit_ecm(ds, spec, tol=1e-9, compute_se=False)
        steps = np.diff(fit.trace)
        assert steps.min() >= -1e-10
        assert fit.converged

    def test_loglik_matches_marginal_at_estimate(self, grouped_sim):
        ds, spec, theta = grouped_sim(I=10, J=3, seed=32)
        fit = fit_ecm(ds, spec, compute_se=False)
        assert abs(fit.loglik - marginal_loglik(ds, fit.params)) < 1e-9

    def test_beats_fixed_variance_fit(self, grouped_sim):
        # freeing the variance parameters cannot lose likelihood
        ds, spec, theta = grouped_sim(I=10, J=3, seed=33)
        free = fit_ecm(ds, spec, compute_se=False)
        held = fit_ecm(ds, spec, fix_beta=1e-8, compute_se=False)
        assert free.loglik >= held.loglik - 1e-8

    def test_fix_beta_is_respected(self, grouped_sim):
        ds, spec, theta = grouped_sim(I=6, J=3, seed=34)
        fit = fit_ecm(ds, spec, fix_beta=(0.4, 0.9), compute_se=False)
        np.testing.assert_array_equal(fit.beta, [0.4, 0.9])
        assert fit.fixed_beta

    def test_iteration_cap_reported(self, grouped_sim):
        ds, spec, theta = grouped_sim(I=8, J=3, seed=35)
        fit = fit_ecm(ds, spec, tol=1e-14, max_iter=2, compute_se=False)
        assert not fit.converged
        assert fit.iterations == 2

    def test_standard_errors_present_and_positive(self, grouped_sim):
        ds, spec, theta = grouped_sim(I=25, J=4, seed=36)
        fit = fit_ecm(ds, spec, compute_se=True)
        assert fit.se is not None and np.all(fit.se > 0)
        assert fit.se_beta is not None
        free = ~np.isclose(fit.beta, 1e-8)
        assert np.all(fit.se_beta[free] > 0)

    def test_degenerate_component_is_pinned(self):
        # this draw sends one variance component to zero; the fit must
        # land on the bound, warn, and still satisfy the ascent property
        spec = ModelSpec(terms=(CovariateTerm(("x",), "generic"),),
                         random_effects="gamma_per_category")
        theta = GammaPoissonParams(gamma=np.array([0.5, -0.3, 0.8]),
                                   beta=np.array([0.5, 1.0]),
                                   log_delta=np.zeros(250), spec=spec)
        from poismult.oracle import simulate
        ds = simulate(spec, theta, 50, 5, seed=101)
        with pytest.warns(DegenerateVarianceWarning):
            fit = fit_ecm(ds, spec, tol=1e-8, max_iter=5000, compute_se=False)
        assert fit.converged
        assert np.isclose(fit.beta.min(), 1e-8)
        assert np.diff(fit.trace).min() >= -1e-10


class TestEvaluateParams:
    def test_wraps_without_estimating(self, grouped_sim):
        ds, spec, theta = grouped_sim(I=5, J=3, seed=41)
        fit = evaluate_params(ds, theta)
        assert fit.iterations == 0
        assert abs(fit.loglik - marginal_loglik(ds, theta)) < 1e-12
        np.testing.assert_array_equal(fit.gamma, theta.gamma)

    def test_round_trip_from_fit(self, grouped_sim):
        ds, spec, theta = grouped_sim(I=6, J=3, seed=42)
        fit = fit_ecm(ds, spec, compute_se=False)
        again = evaluate_params(ds, fit.params)
        assert abs(again.loglik - fit.loglik) < 1e-12

    def test_length_mismatch(self, grouped_sim):
        ds, spec, theta = grouped_sim(I=5, J=3, seed=43)
        bad = replace(theta, log_delta=np.zeros(3))
        with pytest.raises(Exception, match="log_delta|length"):
            evaluate_params(ds, bad)


class TestProfiledMarginal:
    def test_profiling_attains_the_joint_optimum(self, grouped_sim):
        # at the ECM solution, re-profiling the nuisance constants from
        # (gamma, beta) reproduces the fitted marginal log-likelihood
        ds, spec, theta = grouped_sim(I=10, J=4, seed=44)
        fit = fit_ecm(ds, spec, tol=1e-10, compute_se=False)
        prof = profiled_marginal_loglik(ds, spec, fit.gamma, fit.beta,
                                        log_delta0=fit.params.log_delta)
        assert prof >= fit.loglik - 1e-8
        assert abs(prof - fit.loglik) < 1e-6
