"""Multinomial regression via Poisson surrogate models.

The fixed-effects multinomial logit is fitted exactly through a Poisson
log-linear surrogate with profiled per-observation constants; grouped
data gain category-level Gamma rate multipliers with a closed-form
marginal likelihood, estimated by ECM.  Brute-force verification
(quadrature, simulation, direct multinomial maximum likelihood) lives in
``poismult.oracle``.
"""

from .data import (Dataset, LongRecord, ShortRecord, ingest_csv,
                   short_to_frame, to_short)
from .design import (CovariateTerm, DesignMatrix, ModelSpec, build_design,
                     unique_covariate_groups)
from .estimators import GammaPoissonMultinomial, MultinomialLogit
from .exceptions import (AliasingError, DataValidationError,
                         DegenerateVarianceWarning, ModelSpecError,
                         NonConvergenceError, PoismultError, PredictionError,
                         QuadratureError, SchemaError, SeparationWarning)
from .fixed import (FixedFit, fit_fixed, loglik_multinomial,
                    predict_probabilities)
from .gamma_poisson import (EcmState, GammaPoissonFit, GammaPoissonParams,
                            cm_step_beta, cm_step_gamma, e_step,
                            evaluate_params, fit_ecm, marginal_loglik,
                            profiled_marginal_loglik, standard_errors)
from .glm import GlmFit, fit_poisson
from .predict import (Prediction, ebp_lambda, fitted_values, population_mean,
                      predict_dataset, prediction_frame)

__version__ = "0.1.0"

__all__ = [
    "AliasingError",
    "CovariateTerm",
    "DataValidationError",
    "Dataset",
    "DegenerateVarianceWarning",
    "DesignMatrix",
    "EcmState",
    "FixedFit",
    "GammaPoissonFit",
    "GammaPoissonMultinomial",
    "GammaPoissonParams",
    "GlmFit",
    "LongRecord",
    "ModelSpec",
    "ModelSpecError",
    "MultinomialLogit",
    "NonConvergenceError",
    "PoismultError",
    "Prediction",
    "PredictionError",
    "QuadratureError",
    "SchemaError",
    "SeparationWarning",
    "ShortRecord",
    "build_design",
    "cm_step_beta",
    "cm_step_gamma",
    "e_step",
    "ebp_lambda",
    "evaluate_params",
    "fit_ecm",
    "fit_fixed",
    "fit_poisson",
    "fitted_values",
    "ingest_csv",
    "loglik_multinomial",
    "marginal_loglik",
    "population_mean",
    "predict_dataset",
    "predict_probabilities",
    "prediction_frame",
    "profiled_marginal_loglik",
    "short_to_frame",
    "standard_errors",
    "to_short",
    "unique_covariate_groups",
]
