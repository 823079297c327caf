"""Estimator-style front end over the functional fitting API.

MultinomialLogit wraps the exact fixed-effects fit; GammaPoissonMultinomial
wraps the ECM fit with group-level Gamma rate multipliers.  Both follow
the scikit-learn protocol (constructor stores hyperparameters verbatim,
``fit`` returns self, fitted attributes carry a trailing underscore,
``get_params``/``set_params`` work), so they compose with scikit-learn
tooling that does not require array inputs.

The training input is a Dataset, not a feature matrix: multinomial count
data with per-observation category structure does not flatten into the
(n_samples, n_features) shape sklearn transformers expect.
"""

from __future__ import annotations

from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import Dataset
from .design import CovariateTerm, ModelSpec
from .exceptions import ModelSpecError
from . import fixed as _fixed
from . import gamma_poisson as _gp
from . import predict as _predict

__all__ = [
    "MultinomialLogit",
    "GammaPoissonMultinomial",
    "as_terms",
    "check_dataset",
]

_MODES = ("generic", "category_specific")


def check_dataset(X: Any) -> Dataset:
    """Validate the training input; only Dataset instances are accepted."""
    if not isinstance(X, Dataset):
        raise TypeError(
            f"expected a Dataset, got {type(X).__name__}; build one with "
            "Dataset.from_frame or ingest_csv")
    return X


def as_terms(terms: Iterable) -> tuple[CovariateTerm, ...]:
    """Normalize user-friendly term syntax into CovariateTerm objects.

    Accepts CovariateTerm instances, bare covariate names (defaulting to
    category-specific coefficients), and tuples whose last element names
    the mode, e.g. ("price", "generic").
    """
    out: list[CovariateTerm] = []
    for t in terms:
        if isinstance(t, CovariateTerm):
            out.append(t)
        elif isinstance(t, str):
            out.append(CovariateTerm((t,), "category_specific"))
        elif isinstance(t, (tuple, list)) and t:
            if isinstance(t[-1], str) and t[-1] in _MODES:
                if len(t) < 2:
                    raise ModelSpecError(f"term {t!r} names a mode but no covariate")
                out.append(CovariateTerm(tuple(t[:-1]), t[-1]))
            else:
                out.append(CovariateTerm(tuple(t), "category_specific"))
        else:
            raise ModelSpecError(f"cannot interpret term {t!r}")
    return tuple(out)


class MultinomialLogit(BaseEstimator):
    """Baseline-category multinomial logit, fitted exactly via the
    Poisson surrogate with profiled per-observation constants.

    Parameters
    ----------
    terms : iterable of term descriptions, see ``as_terms``.
    baseline : reference category label; None uses the dataset's.
    pooled : share one nuisance constant per unique covariate
        combination instead of one per observation (all-categorical
        specs only; identical estimates, fewer surrogate rows).
    tol, max_iter : Newton stopping controls.
    """

    def __init__(self, terms: Iterable = (), baseline: str | None = None,
                 pooled: bool = False, tol: float = 1e-10, max_iter: int = 100):
        self.terms = terms
        self.baseline = baseline
        self.pooled = pooled
        self.tol = tol
        self.max_iter = max_iter

    def _spec(self) -> ModelSpec:
        mode = "pooled_categorical" if self.pooled else "per_observation"
        return ModelSpec(terms=as_terms(self.terms), baseline=self.baseline,
                         random_effects="none", sum_constants_mode=mode)

    def fit(self, X: Dataset, y: None = None) -> "MultinomialLogit":
        ds = check_dataset(X)
        res = _fixed.fit_fixed(ds, self._spec(), tol=self.tol,
                               max_iter=self.max_iter)
        self.result_ = res
        self.coef_ = res.gamma
        self.se_ = res.se
        self.names_ = list(res.names)
        self.classes_ = tuple(res.design.category_labels)
        self.loglik_ = res.multinomial_loglik
        self.n_iter_ = res.iterations
        return self

    def predict_proba(self, profiles: Sequence[Mapping[str, Any]]) -> np.ndarray:
        """Category probabilities, one row per covariate profile."""
        check_is_fitted(self, "result_")
        return np.array([_fixed.predict_probabilities(self.result_, p)
                         for p in profiles])

    def predict(self, profiles: Sequence[Mapping[str, Any]]) -> np.ndarray:
        """Most probable category label per covariate profile."""
        proba = self.predict_proba(profiles)
        labels = np.array(list(self.classes_), dtype=object)
        return labels[np.argmax(proba, axis=1)]


class GammaPoissonMultinomial(BaseEstimator):
    """Multinomial model with group-level Gamma rate multipliers,
    estimated by ECM on the closed-form marginal likelihood.

    Parameters mirror the functional API: ``fix_beta`` pins the variance
    parameters (scalar broadcasts), ``compute_se`` toggles the numerical
    Hessian at the optimum.
    """

    def __init__(self, terms: Iterable = (), baseline: str | None = None,
                 tol: float = 1e-8, max_iter: int = 5000,
                 fix_beta: float | Sequence[float] | None = None,
                 compute_se: bool = True, beta_init: float = 0.5):
        self.terms = terms
        self.baseline = baseline
        self.tol = tol
        self.max_iter = max_iter
        self.fix_beta = fix_beta
        self.compute_se = compute_se
        self.beta_init = beta_init

    def _spec(self) -> ModelSpec:
        return ModelSpec(terms=as_terms(self.terms), baseline=self.baseline,
                         random_effects="gamma_per_category")

    def fit(self, X: Dataset, y: None = None) -> "GammaPoissonMultinomial":
        ds = check_dataset(X)
        res = _gp.fit_ecm(ds, self._spec(), tol=self.tol,
                          max_iter=self.max_iter, fix_beta=self.fix_beta,
                          compute_se=self.compute_se,
                          beta_init=self.beta_init)
        self.result_ = res
        self.coef_ = res.gamma
        self.beta_ = res.beta
        self.se_ = res.se
        self.se_beta_ = res.se_beta
        self.names_ = list(res.names)
        self.classes_ = tuple(res.design.category_labels)
        self.loglik_ = res.loglik
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self

    def predict(self, X: Dataset) -> np.ndarray:
        """Fitted expected counts per design row of X."""
        check_is_fitted(self, "result_")
        return _predict.fitted_values(self.result_, check_dataset(X))

    def ebp(self, X: Dataset) -> np.ndarray:
        """Empirical best predictor of the rate multipliers, (I, Q)."""
        check_is_fitted(self, "result_")
        return _predict.ebp_lambda(self.result_, check_dataset(X))

    def population_mean(self, covariates: Mapping[str, Any],
                        delta: float = 1.0) -> np.ndarray:
        """Expected counts for an out-of-sample group profile."""
        check_is_fitted(self, "result_")
        return _predict.population_mean(self.result_, covariates, delta=delta)
