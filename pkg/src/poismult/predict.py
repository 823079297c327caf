"""Random-effect prediction and fitted values for the Gamma-Poisson model.

The fitted rate multiplier for group i and category q is the posterior
mean with the point estimates plugged in,

    lambda_hat_iq = (y_i+q + 1/beta_q) / (sum_j delta_ij zeta_ijq + 1/beta_q),

with the baseline multiplier fixed at 1.  Fitted counts follow as
delta * lambda_hat * zeta, with delta re-profiled at lambda_hat so the
per-observation category sums reproduce the observed totals exactly.
Out-of-sample groups have no posterior; their expected counts come from
the population-averaged mean delta * zeta, which does not involve beta
because the rate multipliers have unit prior mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
import pandas as pd

from .data import Dataset
from .design import DesignMatrix, build_design
from .exceptions import PredictionError
from .gamma_poisson import GammaPoissonFit

__all__ = [
    "Prediction",
    "ebp_lambda",
    "fitted_values",
    "population_mean",
    "predict_dataset",
    "prediction_frame",
]


@dataclass(frozen=True)
class Prediction:
    """Container for the per-group multipliers and per-row fitted counts.

    ``lambda_ebp`` is (I, Q) in the design's group and category order,
    baseline column identically 1.  ``fitted`` aligns with the design
    rows (observation-major, categories in label order).
    ``population_mean`` is set only when requested for a covariate
    profile; it is per-category expected counts for an unseen group.
    """

    lambda_ebp: np.ndarray
    fitted: np.ndarray
    population_mean: np.ndarray | None = None


def _aligned_design(fit: GammaPoissonFit, ds: Dataset) -> tuple[DesignMatrix, np.ndarray]:
    """Build the design for ds and align the fit's log-delta to it.

    Raises PredictionError when ds contains groups or observations the
    fit has no estimates for.
    """
    spec = fit.params.spec if fit.params.spec is not None else fit.design.spec
    X = build_design(ds, spec)
    train_groups = set(fit.design.group_labels)
    missing = [g for g in X.group_labels if g not in train_groups]
    if missing:
        raise PredictionError(
            f"groups {missing!r} were not in the training data; use "
            "population_mean for out-of-sample groups")
    if X.nuisance_ids == fit.design.nuisance_ids:
        return X, fit.params.log_delta
    by_id = {oid: k for k, oid in enumerate(fit.design.nuisance_ids)}
    try:
        idx = np.array([by_id[oid] for oid in X.nuisance_ids], dtype=np.intp)
    except KeyError as e:
        raise PredictionError(
            f"observation {e.args[0]!r} has no fitted nuisance constant; "
            "use population_mean for new observations")
    return X, fit.params.log_delta[idx]


def _group_posterior(fit: GammaPoissonFit, X: DesignMatrix,
                     log_delta: np.ndarray) -> np.ndarray:
    Q = len(X.category_labels)
    I = len(X.group_labels)
    b_idx = X.category_labels.index(X.baseline)
    zeta = np.exp(X.structural @ fit.params.gamma)
    w = np.exp(log_delta)[X.nuisance_index] * zeta
    row_group = X.group_of_nuisance[X.nuisance_index]
    Y = np.zeros((I, Q))
    S = np.zeros((I, Q))
    np.add.at(Y, (row_group, X.row_category), X.y.astype(np.float64))
    np.add.at(S, (row_group, X.row_category), w)
    lam = np.ones((I, Q))
    k = 0
    for q in range(Q):
        if q == b_idx:
            continue
        a = 1.0 / fit.params.beta[k]
        lam[:, q] = (Y[:, q] + a) / (S[:, q] + a)
        k += 1
    return lam


def ebp_lambda(fit: GammaPoissonFit, ds: Dataset) -> np.ndarray:
    """Empirical best predictor of the rate multipliers, (I, Q).

    Group order follows the dataset's design; the baseline column is
    identically 1.  Every group and observation in ds must have been
    present when the model was fitted.
    """
    X, log_delta = _aligned_design(fit, ds)
    if X.group_of_nuisance is None:
        raise PredictionError("dataset has no group column; the predictor "
                              "is defined per group")
    return _group_posterior(fit, X, log_delta)


def fitted_values(fit: GammaPoissonFit, ds: Dataset) -> np.ndarray:
    """Expected counts per design row, delta * lambda_hat * zeta.

    delta is profiled against lambda_hat, so within each observation the
    fitted counts sum exactly to the observed total.
    """
    X, log_delta = _aligned_design(fit, ds)
    lam_mat = _group_posterior(fit, X, log_delta)
    row_group = X.group_of_nuisance[X.nuisance_index]
    zeta = np.exp(X.structural @ fit.params.gamma)
    lam = lam_mat[row_group, X.row_category]
    base = lam * zeta
    denom = np.bincount(X.nuisance_index, weights=base, minlength=X.n_nuisance)
    ytot = np.bincount(X.nuisance_index, weights=X.y.astype(np.float64),
                       minlength=X.n_nuisance)
    delta = np.where(denom > 0, ytot / np.where(denom > 0, denom, 1.0), 0.0)
    return delta[X.nuisance_index] * base


def population_mean(fit, covariates: Mapping[str, Any],
                    delta: float = 1.0) -> np.ndarray:
    """Population-averaged expected counts for one covariate profile.

    Returns a length-Q vector in category-label order: delta * zeta_q.
    The rate multipliers integrate out to their unit prior mean, so the
    result does not depend on beta.  Works for fixed-effects and
    Gamma-Poisson fits alike.
    """
    rows = fit.design.structural_rows_for(covariates)
    gamma = np.asarray(fit.gamma, dtype=np.float64)
    return delta * np.exp(rows @ gamma)


def predict_dataset(fit: GammaPoissonFit, ds: Dataset) -> Prediction:
    """Bundle the EBP multipliers and fitted counts for one dataset."""
    return Prediction(lambda_ebp=ebp_lambda(fit, ds),
                      fitted=fitted_values(fit, ds))


def prediction_frame(fit: GammaPoissonFit, ds: Dataset) -> pd.DataFrame:
    """Per-row table of observed and fitted counts with the multipliers."""
    X, log_delta = _aligned_design(fit, ds)
    lam_mat = _group_posterior(fit, X, log_delta)
    fitted = fitted_values(fit, ds)
    row_group = X.group_of_nuisance[X.nuisance_index]
    labels = list(X.category_labels)
    return pd.DataFrame({
        "group": [X.group_labels[g] for g in row_group],
        "obs": [X.nuisance_ids[k] for k in X.nuisance_index],
        "category": [labels[c] for c in X.row_category],
        "count": X.y,
        "lambda_ebp": lam_mat[row_group, X.row_category],
        "fitted": fitted,
    })
