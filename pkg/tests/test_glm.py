"""Poisson log-linear fitting with profiled per-observation constants.

The fits are checked against an independent full-vector optimizer
(scipy BFGS over nuisance constants and slopes jointly), so the block
elimination and the profiled covariance get end-to-end coverage.
"""

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import gammaln

from poismult.design import CovariateTerm, ModelSpec, build_design
from poismult.exceptions import AliasingError
from poismult.glm import fit_poisson

from conftest import random_fixed_instance


def full_loglik(X, coefs, y):
    eta = X.full_matrix() @ coefs
    mu = np.exp(eta)
    return float(np.sum(y * eta - mu - gammaln(y + 1.0)))


def brute_force_mle(X, y):
    p = X.n_nuisance + X.p_structural
    res = minimize(lambda c: -full_loglik(X, c, y), np.zeros(p),
                   method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
    return res.x


@pytest.fixture(scope="module")
def small_design():
    ds, spec = random_fixed_instance(seed=11)
    X = build_design(ds, spec)
    return X


class TestFitPoisson:
    def test_matches_full_vector_optimizer(self, small_design):
        X = small_design
        fit = fit_poisson(X)
        assert fit.converged
        ref = brute_force_mle(X, X.y.astype(float))
        np.testing.assert_allclose(fit.gamma, ref[X.n_nuisance:],
                                   rtol=0, atol=5e-6)
        np.testing.assert_allclose(
            fit.log_likelihood, full_loglik(X, ref, X.y.astype(float)),
            rtol=0, atol=1e-8)

    def test_score_vanishes_at_optimum(self, small_design):
        fit = fit_poisson(small_design)
        assert fit.max_score_residual(small_design, small_design.y) < 1e-6

    def test_profiled_constants_reproduce_observation_totals(self, small_design):
        X = small_design
        fit = fit_poisson(X)
        # each observation's fitted rates sum to its observed total
        tot_fit = np.bincount(X.nuisance_index, weights=fit.fitted_values,
                              minlength=X.n_nuisance)
        tot_obs = np.bincount(X.nuisance_index, weights=X.y.astype(float),
                              minlength=X.n_nuisance)
        np.testing.assert_allclose(tot_fit, tot_obs, rtol=0, atol=1e-8)

    def test_offset_shifts_constants_only(self, small_design):
        X = small_design
        base = fit_poisson(X)
        shifted = fit_poisson(X, offset=np.full(X.n_rows, 0.7))
        np.testing.assert_allclose(shifted.gamma, base.gamma, atol=1e-8)
        np.testing.assert_allclose(shifted.log_likelihood, base.log_likelihood,
                                   atol=1e-8)

    def test_deviance_nonnegative(self):
        ds, spec = random_fixed_instance(seed=12)
        X = build_design(ds, spec)
        fit = fit_poisson(X)
        assert fit.deviance >= -1e-9

    def test_covariance_matches_observed_information(self, small_design):
        X = small_design
        fit = fit_poisson(X)
        # numerical Hessian of the profiled log-likelihood in gamma
        def prof(gamma):
            w = np.exp(X.structural @ gamma)
            tot = np.bincount(X.nuisance_index, weights=w,
                              minlength=X.n_nuisance)
            ysum = np.bincount(X.nuisance_index, weights=X.y.astype(float),
                               minlength=X.n_nuisance)
            with np.errstate(divide="ignore", invalid="ignore"):
                log_delta = np.where(ysum > 0, np.log(ysum / tot), 0.0)
            eta = log_delta[X.nuisance_index] + X.structural @ gamma
            mu = np.exp(eta)
            return float(np.sum(X.y * eta - mu))

        p = len(fit.gamma)
        H = np.zeros((p, p))
        h = 1e-5
        for a in range(p):
            for b in range(a, p):
                ea = np.eye(p)[a] * h
                eb = np.eye(p)[b] * h
                H[a, b] = H[b, a] = (
                    prof(fit.gamma + ea + eb) - prof(fit.gamma + ea - eb)
                    - prof(fit.gamma - ea + eb) + prof(fit.gamma - ea - eb)
                ) / (4 * h * h)
        np.testing.assert_allclose(fit.covariance, np.linalg.inv(-H),
                                   rtol=5e-4, atol=1e-8)

    def test_rank_deficiency_names_column(self, small_design):
        X = small_design
        from poismult.design import DesignMatrix
        dup = np.column_stack([X.structural, X.structural[:, -1]])
        X2 = DesignMatrix(dup, list(X.structural_names) + ["dup"],
                          nuisance_index=X.nuisance_index,
                          nuisance_names=X.nuisance_names, y=X.y,
                          row_category=X.row_category,
                          category_labels=X.category_labels,
                          baseline=X.baseline)
        with pytest.raises(AliasingError, match="dup"):
            fit_poisson(X2)

    def test_max_iter_cap(self, small_design):
        fit = fit_poisson(small_design, max_iter=1)
        assert not fit.converged
