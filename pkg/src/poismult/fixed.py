"""Exact fixed-effects multinomial fitting via the Poisson surrogate.

A multinomial regression is fitted by running Poisson IRLS on the
surrogate design with one nuisance constant per observation.  Profiling
the constants makes the surrogate objective equal the multinomial
log-likelihood up to a data-only constant, so coefficient estimates and
their asymptotic variances are those of the multinomial model itself.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .data import Dataset
from .design import DesignMatrix, ModelSpec, build_design
from .exceptions import ModelSpecError, SeparationWarning
from .glm import GlmFit, fit_poisson
from .special import log_factorial

__all__ = [
    "FixedFit",
    "fit_fixed",
    "loglik_multinomial",
    "predict_probabilities",
]


@dataclass
class FixedFit:
    """Fixed-effects multinomial fit.

    Attributes:
        gamma: structural coefficients (category intercepts, slopes).
        names: column name per coefficient.
        se: standard errors, structural block only.
        delta_hat: nuisance constant per observation (or per pooled
            block), equal to y_+/zeta_+; zero for empty units.
        multinomial_loglik: multinomial log-likelihood at the fit.
        surrogate_profiled_loglik: surrogate objective with the nuisance
            constants profiled out; differs from ``multinomial_loglik``
            by a data-only constant.
        fitted_probabilities: (n_units, Q) matrix of category
            probabilities per observation unit.
        infinite_estimates: names of intercept columns whose estimates
            are unbounded (a category with zero total count).
    """

    gamma: np.ndarray
    names: tuple[str, ...]
    se: np.ndarray
    covariance: np.ndarray
    delta_hat: np.ndarray
    multinomial_loglik: float
    surrogate_profiled_loglik: float
    fitted_probabilities: np.ndarray
    infinite_estimates: tuple[str, ...]
    converged: bool
    iterations: int
    design: DesignMatrix
    glm: GlmFit
    tol: float = 1e-10

    @property
    def zeta(self) -> np.ndarray:
        """(n_units, Q) surrogate rates exp(x'gamma), baseline column 1."""
        Q = len(self.design.category_labels)
        return np.exp(self.design.structural @ self.gamma).reshape(-1, Q)

    def coefficient_table(self) -> list[dict]:
        rows = []
        for k, name in enumerate(self.names):
            est = float(self.gamma[k])
            se = float(self.se[k])
            rows.append({"name": name, "estimate": est, "se": se,
                         "z": est / se if se > 0 else None})
        return rows

    def to_dict(self) -> dict:
        """JSON-ready fit report."""
        return {
            "model": "fixed",
            "coefficients": self.coefficient_table(),
            "gamma_values": [float(v) for v in self.gamma],
            "structural_names": list(self.names),
            "loglik": float(self.multinomial_loglik),
            "surrogate_profiled_loglik": float(self.surrogate_profiled_loglik),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "tol": float(self.tol),
            "category_labels": list(self.design.category_labels),
            "baseline": self.design.baseline,
            "nuisance_ids": [str(v) for v in self.design.nuisance_ids],
            "delta_hat": [float(v) for v in self.delta_hat],
            "infinite_estimates": list(self.infinite_estimates),
            "spec": self.design.spec.to_dict() if self.design.spec else None,
        }


def _loglik_terms(y: np.ndarray, zeta: np.ndarray) -> tuple[float, float]:
    """Return the multinomial and profiled-surrogate log-likelihood values.

    y and zeta are (n_units, Q).  Units with zero total count contribute
    nothing to either quantity.
    """
    yplus = y.sum(axis=1)
    zplus = zeta.sum(axis=1)
    ylogz = float(np.sum(np.where(y > 0, y * np.log(zeta), 0.0)))
    yplus_logzplus = float(np.sum(yplus * np.log(zplus)))
    mult = (float(np.sum(log_factorial(yplus))) - float(np.sum(log_factorial(y)))
            + ylogz - yplus_logzplus)
    pos = yplus > 0
    yp_logyp = float(np.sum(np.where(pos, yplus * np.log(np.where(pos, yplus, 1.0)), 0.0)))
    profiled = -float(np.sum(yplus)) + yp_logyp - yplus_logzplus + ylogz
    return mult, profiled


def fit_fixed(ds: Dataset, spec: ModelSpec, tol: float = 1e-10,
              max_iter: int = 100) -> FixedFit:
    """Fit the fixed-effects multinomial model for ``spec`` on ``ds``.

    Raises ModelSpecError when the spec requests random effects; emits a
    SeparationWarning (and flags the column) when a non-baseline category
    has zero total count, which sends its intercept to minus infinity.
    """
    if spec.random_effects != "none":
        raise ModelSpecError(
            "fit_fixed handles fixed-effects specs only (random_effects='none')")
    X = build_design(ds, spec)
    Q = len(X.category_labels)
    y = X.y.reshape(-1, Q)

    infinite: list[str] = []
    cat_totals = y.sum(axis=0)
    for q, label in enumerate(X.category_labels):
        if label == X.baseline:
            continue
        if cat_totals[q] == 0:
            name = f"C{label}"
            infinite.append(name)
            warnings.warn(
                f"category {label!r} has zero total count; intercept {name!r} "
                "is unbounded below", SeparationWarning)

    glm = fit_poisson(X, tol=tol, max_iter=max_iter)
    zeta = np.exp(X.structural @ glm.gamma).reshape(-1, Q)
    probs = zeta / zeta.sum(axis=1, keepdims=True)
    mult_ll, prof_ll = _loglik_terms(y, zeta)

    return FixedFit(
        gamma=glm.gamma, names=X.structural_names, se=glm.se,
        covariance=glm.covariance, delta_hat=glm.delta,
        multinomial_loglik=mult_ll, surrogate_profiled_loglik=prof_ll,
        fitted_probabilities=probs, infinite_estimates=tuple(infinite),
        converged=glm.converged, iterations=glm.iterations,
        design=X, glm=glm, tol=tol)


def loglik_multinomial(fit: FixedFit, ds: Dataset) -> float:
    """Multinomial log-likelihood of ``fit`` on the data it was fitted to.

    In pooled mode the value refers to the pooled (block-level) counts.
    """
    Q = len(fit.design.category_labels)
    if ds.Q != Q:
        raise ModelSpecError(f"dataset has {ds.Q} categories, fit has {Q}")
    y = fit.design.y.reshape(-1, Q)
    mult, _ = _loglik_terms(y, fit.zeta)
    return mult


def predict_probabilities(fit: FixedFit,
                          new_covariates: Mapping[str, Any] | Sequence[Mapping[str, Any]],
                          ) -> np.ndarray:
    """Category probabilities for new covariate profiles.

    Accepts one mapping (returns shape (Q,)) or a sequence of mappings
    (returns (n, Q)).  Each mapping gives every spec covariate either a
    scalar or a per-category value mapping; unseen categorical levels
    raise PredictionError.
    """
    single = isinstance(new_covariates, Mapping)
    profiles = [new_covariates] if single else list(new_covariates)
    out = np.empty((len(profiles), len(fit.design.category_labels)))
    for i, cov in enumerate(profiles):
        rows = fit.design.structural_rows_for(cov)
        z = np.exp(rows @ fit.gamma)
        out[i] = z / z.sum()
    return out[0] if single else out
