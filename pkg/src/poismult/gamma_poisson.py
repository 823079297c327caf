"""Gamma-Poisson surrogate model for correlated multinomial responses.

Each group i carries multiplicative rate factors lambda_iq, one per
category, Gamma distributed with unit mean and variance beta_q; the
baseline category's factor is fixed at 1 for identifiability.  The
marginal likelihood integrates the factors out in closed form, and the
parameters are estimated by an ECM algorithm whose CM-steps are a
Poisson IRLS fit (for the regression coefficients and the nuisance
constants) and one-dimensional searches (for the variance parameters).

Numerical note: the closed-form group terms are evaluated through
log Gamma(a+Y) - log Gamma(a) - Y*log(a) = sum_{k<Y} log1p(k/a), which
stays exact down to variance parameters of 1e-8 where the direct
log-gamma difference would cancel catastrophically.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .data import Dataset
from .design import DesignMatrix, ModelSpec, build_design
from .exceptions import (DataValidationError, DegenerateVarianceWarning,
                         ModelSpecError)
from .fixed import fit_fixed
from .glm import fit_poisson
from .special import digamma, log_factorial, log_gamma

__all__ = [
    "GammaPoissonParams",
    "EcmState",
    "GammaPoissonFit",
    "marginal_loglik",
    "e_step",
    "cm_step_gamma",
    "cm_step_beta",
    "fit_ecm",
    "evaluate_params",
    "profiled_marginal_loglik",
    "standard_errors",
]

_BETA_LO = 1e-8
_BETA_HI = 1e6


@dataclass(frozen=True)
class GammaPoissonParams:
    """Parameters of the Gamma-Poisson surrogate.

    Attributes:
        gamma: structural coefficients in design-column order.
        beta: variance parameters, one per non-baseline category in
            label order; Var(lambda_iq) = beta_q, E(lambda_iq) = 1.
        log_delta: per-observation nuisance constants (-inf for
            observations with zero total count).  Conceptually part of
            gamma; stored separately because there is one per
            observation.
        spec: the model spec the gamma layout refers to.
        names: structural column names.
    """

    gamma: np.ndarray
    beta: np.ndarray
    log_delta: np.ndarray
    spec: ModelSpec | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=np.float64))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64))
        object.__setattr__(self, "log_delta",
                           np.asarray(self.log_delta, dtype=np.float64))
        if self.beta.ndim != 1 or self.beta.size == 0:
            raise ValueError("beta must be a non-empty vector (one entry per "
                             "non-baseline category)")
        if not np.all(self.beta > 0):
            raise ValueError(f"domain error: beta must be positive, got {self.beta}")

    @property
    def Q(self) -> int:
        return len(self.beta) + 1


@dataclass
class EcmState:
    """One ECM iterate: parameters plus the E-step posterior summaries."""

    params: GammaPoissonParams
    lambda_hat: np.ndarray
    chi_hat: np.ndarray
    marginal_loglik: float
    iteration: int


@dataclass
class GammaPoissonFit:
    """Converged (or partial) Gamma-Poisson fit.

    ``se`` covers the structural coefficients; ``se_beta`` the variance
    parameters (delta-method from log beta).  Both are None when the
    numerical Hessian was not positive definite or SEs were not
    requested.
    """

    params: GammaPoissonParams
    names: tuple[str, ...]
    beta_names: tuple[str, ...]
    se: np.ndarray | None
    se_beta: np.ndarray | None
    loglik: float
    trace: tuple[float, ...]
    converged: bool
    iterations: int
    lambda_hat: np.ndarray
    chi_hat: np.ndarray
    design: DesignMatrix
    tol: float
    state: EcmState
    fixed_beta: bool = False
    covariance: np.ndarray | None = None

    @property
    def gamma(self) -> np.ndarray:
        return self.params.gamma

    @property
    def beta(self) -> np.ndarray:
        return self.params.beta

    @property
    def delta_hat(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.params.log_delta)

    def coefficient_table(self) -> list[dict]:
        rows = []
        for k, name in enumerate(self.names):
            est = float(self.params.gamma[k])
            se = float(self.se[k]) if self.se is not None else None
            z = est / se if se else None
            rows.append({"name": name, "estimate": est, "se": se, "z": z})
        return rows

    def beta_table(self) -> list[dict]:
        rows = []
        for k, name in enumerate(self.beta_names):
            est = float(self.params.beta[k])
            se = float(self.se_beta[k]) if self.se_beta is not None else None
            z = np.log(est) / (se / est) if se else None
            rows.append({"name": name, "estimate": est, "se": se,
                         "z_log": float(z) if z is not None else None})
        return rows

    def to_dict(self) -> dict:
        """JSON-ready fit report; carries enough to rebuild the params."""
        spec = self.params.spec if self.params.spec is not None else self.design.spec
        return {
            "model": "gamma_poisson",
            "coefficients": self.coefficient_table(),
            "beta": self.beta_table(),
            "gamma_values": [float(v) for v in self.params.gamma],
            "beta_values": [float(v) for v in self.params.beta],
            "log_delta": [float(v) for v in self.params.log_delta],
            "structural_names": list(self.names),
            "nuisance_ids": [str(v) for v in self.design.nuisance_ids],
            "spec": spec.to_dict() if spec is not None else None,
            "loglik": float(self.loglik),
            "loglik_trace": [float(v) for v in self.trace],
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "tol": float(self.tol),
            "beta_fixed": bool(self.fixed_beta),
            "category_labels": list(self.design.category_labels),
            "baseline": self.design.baseline,
            "group_labels": [str(g) for g in self.design.group_labels],
            "lambda_hat": [[float(v) for v in row] for row in self.lambda_hat],
        }


class _Workspace:
    """Cached index arrays and sums for one (dataset, spec) pair."""

    def __init__(self, ds: Dataset, spec: ModelSpec, X: DesignMatrix | None = None):
        if spec.random_effects != "gamma_per_category":
            raise ModelSpecError(
                "Gamma-Poisson fitting needs random_effects='gamma_per_category'")
        self.ds = ds
        self.spec = spec
        self.X = X if X is not None else build_design(ds, spec)
        if self.X.group_of_nuisance is None:
            raise DataValidationError(
                "dataset has no group column; the Gamma-Poisson model needs "
                "grouped observations")
        self.Q = len(self.X.category_labels)
        self.I = len(self.X.group_labels)
        self.n_obs = self.X.n_nuisance
        self.row_group = self.X.group_of_nuisance[self.X.nuisance_index]
        self.row_cat = self.X.row_category
        self.cell = self.row_group * self.Q + self.row_cat
        self.y = self.X.y.astype(np.float64)
        self.Y_iq = np.bincount(self.cell, weights=self.y,
                                minlength=self.I * self.Q).reshape(self.I, self.Q)
        self.baseline_col = self.X.category_labels.index(self.X.baseline)
        self.nonbase = tuple(q for q in range(self.Q) if q != self.baseline_col)
        self.log_yfact = float(np.sum(log_factorial(self.y)))

    def zeta(self, gamma: np.ndarray) -> np.ndarray:
        return np.exp(self.X.structural @ gamma)

    def rates(self, gamma: np.ndarray, log_delta: np.ndarray) -> np.ndarray:
        """delta_ij * zeta_ijq per design row."""
        with np.errstate(over="ignore"):
            d = np.exp(log_delta)
        return d[self.X.nuisance_index] * self.zeta(gamma)

    def S_iq(self, gamma: np.ndarray, log_delta: np.ndarray) -> np.ndarray:
        w = self.rates(gamma, log_delta)
        return np.bincount(self.cell, weights=w,
                           minlength=self.I * self.Q).reshape(self.I, self.Q)

    def marginal(self, gamma: np.ndarray, beta: np.ndarray,
                 log_delta: np.ndarray) -> float:
        if len(beta) != self.Q - 1:
            raise ValueError(f"beta has {len(beta)} entries, expected {self.Q - 1}")
        if not np.all(beta > 0):
            raise ValueError(f"domain error: beta must be positive, got {beta}")
        w = self.rates(gamma, log_delta)
        S = np.bincount(self.cell, weights=w,
                        minlength=self.I * self.Q).reshape(self.I, self.Q)
        pos = self.y > 0
        ll = float(np.sum(np.where(pos, self.y * np.log(np.where(pos, w, 1.0)), 0.0)))
        ll -= self.log_yfact
        ll -= float(np.sum(S[:, self.baseline_col]))
        for k, q in enumerate(self.nonbase):
            a = 1.0 / beta[k]
            Y = self.Y_iq[:, q]
            ll += float(np.sum(_lgamma_ratio(Y, a) - (a + Y) * np.log1p(S[:, q] / a)))
        return ll

    def posterior(self, gamma: np.ndarray, beta: np.ndarray,
                  log_delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means of lambda and log lambda, (I, Q) each."""
        S = self.S_iq(gamma, log_delta)
        lam = np.ones((self.I, self.Q))
        chi = np.zeros((self.I, self.Q))
        for k, q in enumerate(self.nonbase):
            a = 1.0 / beta[k]
            Y = self.Y_iq[:, q]
            lam[:, q] = (Y + a) / (S[:, q] + a)
            chi[:, q] = digamma(Y + a) - np.log(S[:, q] + a)
        return lam, chi

    def profile_delta(self, gamma: np.ndarray, beta: np.ndarray,
                      log_delta0: np.ndarray, tol: float = 1e-13,
                      max_iter: int = 500) -> np.ndarray:
        """Maximize the marginal likelihood over the nuisance constants.

        The stationarity condition is delta_ij = y_ij+ / sum_q
        lambda_iq(delta) zeta_ijq with lambda the posterior mean, a
        contraction solved by fixed-point iteration from the supplied
        start.
        """
        zeta = self.zeta(gamma)
        yplus = np.bincount(self.X.nuisance_index, weights=self.y,
                            minlength=self.n_obs)
        live = yplus > 0
        log_delta = log_delta0.copy()
        for _ in range(max_iter):
            lam, _ = self.posterior(gamma, beta, log_delta)
            denom = np.bincount(self.X.nuisance_index,
                                weights=lam[self.row_group, self.row_cat] * zeta,
                                minlength=self.n_obs)
            with np.errstate(divide="ignore"):
                new = np.where(live, np.log(yplus) - np.log(denom), -np.inf)
            change = np.max(np.abs(new[live] - log_delta[live])) if live.any() else 0.0
            log_delta = new
            if change < tol:
                break
        return log_delta


def _lgamma_ratio(Y: np.ndarray, a: float) -> np.ndarray:
    """log Gamma(a+Y) - log Gamma(a) - Y*log(a) for integer counts Y.

    Computed as sum_{k<Y} log1p(k/a), which is stable for the whole
    supported range of a (variance parameters from 1e-8 to 1e6).
    """
    Y = np.asarray(Y)
    out = np.empty(Y.shape, dtype=np.float64)
    flat_out = out.reshape(-1)
    for idx, yv in enumerate(np.asarray(Y, dtype=np.int64).reshape(-1)):
        if yv > 100000:
            flat_out[idx] = (log_gamma(a + float(yv)) - log_gamma(a)
                             - float(yv) * np.log(a))
        else:
            flat_out[idx] = float(np.sum(np.log1p(np.arange(yv) / a)))
    return out


def marginal_loglik(ds: Dataset, params: GammaPoissonParams) -> float:
    """Closed-form marginal log-likelihood of the Gamma-Poisson surrogate."""
    if params.spec is None:
        raise ModelSpecError("params carry no model spec")
    ws = _Workspace(ds, params.spec)
    return ws.marginal(params.gamma, params.beta, params.log_delta)


def e_step(ds: Dataset, params: GammaPoissonParams) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means of the rate factors and their logs, (I, Q) each.

    The baseline column is identically (1, 0): that factor is fixed, not
    random.  For the rest, the posterior is the conjugate Gamma update
    with shape 1/beta_q + y_i+q and rate 1/beta_q + sum_j delta zeta.
    """
    if params.spec is None:
        raise ModelSpecError("params carry no model spec")
    ws = _Workspace(ds, params.spec)
    return ws.posterior(params.gamma, params.beta, params.log_delta)


def cm_step_gamma(ds: Dataset, lambda_hat: np.ndarray,
                  current: GammaPoissonParams,
                  tol: float = 1e-12, max_iter: int = 200,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Maximize the expected complete-data log-likelihood over gamma and delta.

    A Poisson fit with log(lambda_hat) entering as a row offset; the
    nuisance constants are profiled analytically inside the solver.
    Returns the updated (gamma, log_delta).
    """
    if current.spec is None:
        raise ModelSpecError("params carry no model spec")
    ws = _Workspace(ds, current.spec)
    return _cm_gamma(ws, lambda_hat, tol=tol, max_iter=max_iter)


def _cm_gamma(ws: _Workspace, lambda_hat: np.ndarray, tol: float = 1e-12,
              max_iter: int = 200) -> tuple[np.ndarray, np.ndarray]:
    offset = np.log(lambda_hat[ws.row_group, ws.row_cat])
    glm = fit_poisson(ws.X, offset=offset, tol=tol, max_iter=max_iter)
    with np.errstate(divide="ignore"):
        log_delta = np.where(glm.delta > 0,
                             np.log(np.where(glm.delta > 0, glm.delta, 1.0)), -np.inf)
    return glm.gamma, log_delta


def cm_step_beta(lambda_hat: np.ndarray, chi_hat: np.ndarray, q: int,
                 prev_beta: float | None = None, category: str = "") -> float:
    """Maximize the expected complete-data log-likelihood over one beta_q.

    ``q`` indexes the column of the posterior matrices (must not be the
    baseline column).  The objective per group is
    (1/b - 1)*chi - lambda/b - log(b)/b - logGamma(1/b); the search runs
    on log b over [log 1e-8, log 1e6].  Hitting the lower bound means
    the random effect for this category is degenerating to a constant,
    which is reported as a DegenerateVarianceWarning.
    """
    lam = np.asarray(lambda_hat, dtype=np.float64)[:, q]
    chi = np.asarray(chi_hat, dtype=np.float64)[:, q]
    I = len(lam)
    sum_chi = float(np.sum(chi))
    sum_lam = float(np.sum(lam))

    def objective(log_b: float) -> float:
        b = np.exp(log_b)
        a = 1.0 / b
        return (a - 1.0) * sum_chi - a * sum_lam + I * (a * np.log(a) - log_gamma(a))

    lo, hi = np.log(_BETA_LO), np.log(_BETA_HI)
    res = minimize_scalar(lambda u: -objective(u), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-10})
    candidates = [float(res.x), lo, hi]
    if prev_beta is not None and _BETA_LO <= prev_beta <= _BETA_HI:
        candidates.append(float(np.log(prev_beta)))
    best = max(candidates, key=objective)
    beta = float(np.exp(best))
    if beta <= _BETA_LO * (1.0 + 1e-6):
        label = f" for category {category!r}" if category else ""
        warnings.warn(
            f"variance parameter{label} reached the lower bound {_BETA_LO:g}; "
            "the random effect is degenerating to a constant",
            DegenerateVarianceWarning)
    return beta


def fit_ecm(ds: Dataset, spec: ModelSpec, tol: float = 1e-8,
            max_iter: int = 5000, fix_beta: float | Sequence[float] | None = None,
            compute_se: bool = True, beta_init: float = 0.5) -> GammaPoissonFit:
    """Fit the Gamma-Poisson model by Expectation/Conditional Maximization.

    Each iteration takes the E-step posteriors at the current parameters,
    refits gamma and the nuisance constants by an offset Poisson IRLS,
    and maximizes each variance parameter by a bounded scalar search.
    Every conditional step maximizes the same expected complete-data
    objective exactly, so the marginal log-likelihood trace is
    non-decreasing.

    Args:
        ds: grouped dataset.
        spec: model spec with random_effects='gamma_per_category'.
        tol: stop when the largest relative parameter change and the
            marginal log-likelihood change both fall below this.
        max_iter: iteration cap; a capped fit comes back converged=False
            with the full trace (no exception).
        fix_beta: hold the variance parameters at this value (scalar or
            one per non-baseline category) instead of updating them.
        compute_se: numerically differentiate the profiled marginal
            likelihood at the optimum for standard errors.
        beta_init: starting value for the free variance parameters.

    Returns:
        GammaPoissonFit; ``converged`` is False when the cap was hit.
    """
    ws = _Workspace(ds, spec)
    Q = ws.Q
    nonbase_labels = tuple(ws.X.category_labels[q] for q in ws.nonbase)
    beta_names = tuple(f"beta_{lab}" for lab in nonbase_labels)

    fixed_spec = replace(spec, random_effects="none")
    warm = fit_fixed(ds, fixed_spec)
    gamma = warm.gamma.copy()
    with np.errstate(divide="ignore"):
        log_delta = np.where(warm.delta_hat > 0,
                             np.log(np.where(warm.delta_hat > 0, warm.delta_hat, 1.0)),
                             -np.inf)

    if fix_beta is not None:
        beta = np.broadcast_to(np.asarray(fix_beta, dtype=np.float64),
                               (Q - 1,)).copy()
        if not np.all(beta > 0):
            raise ValueError(f"domain error: fixed beta must be positive, got {beta}")
    else:
        beta = np.full(Q - 1, float(beta_init))

    loglik = ws.marginal(gamma, beta, log_delta)
    trace = [loglik]
    converged = False
    iteration = 0
    pinned = np.zeros(Q - 1, dtype=bool)

    for iteration in range(1, max_iter + 1):
        lam, chi = ws.posterior(gamma, beta, log_delta)
        new_gamma, new_log_delta = _cm_gamma(ws, lam)
        if fix_beta is None:
            new_beta = np.array([
                beta[k] if pinned[k] else
                cm_step_beta(lam, chi, q, prev_beta=beta[k],
                             category=nonbase_labels[k])
                for k, q in enumerate(ws.nonbase)])
        else:
            new_beta = beta
        new_loglik = ws.marginal(new_gamma, new_beta, new_log_delta)

        # A variance component whose conditional updates keep shrinking
        # toward zero is crawling to the boundary at a geometric rate;
        # jump it there outright when that does not cost likelihood, and
        # stop updating it.
        if fix_beta is None:
            for k in range(Q - 1):
                if pinned[k] or not (new_beta[k] < 1e-3 and new_beta[k] < beta[k]):
                    continue
                snapped = new_beta.copy()
                snapped[k] = _BETA_LO
                ll_snap = ws.marginal(new_gamma, snapped, new_log_delta)
                if ll_snap >= new_loglik - 1e-12:
                    new_beta, new_loglik = snapped, ll_snap
                    pinned[k] = True
                    warnings.warn(
                        f"variance parameter for category "
                        f"{nonbase_labels[k]!r} degenerated to the lower "
                        f"bound {_BETA_LO:g}; holding it there",
                        DegenerateVarianceWarning)

        old = np.concatenate([gamma, beta])
        new = np.concatenate([new_gamma, new_beta])
        rel_change = float(np.max(np.abs(new - old) / np.maximum(1.0, np.abs(old)))) \
            if len(old) else 0.0
        ll_change = abs(new_loglik - loglik)

        gamma, log_delta, beta, loglik = new_gamma, new_log_delta, new_beta, new_loglik
        trace.append(loglik)
        if rel_change < tol and ll_change < tol:
            converged = True
            break

    lam, chi = ws.posterior(gamma, beta, log_delta)
    params = GammaPoissonParams(gamma=gamma, beta=beta, log_delta=log_delta,
                                spec=spec, names=ws.X.structural_names)
    state = EcmState(params=params, lambda_hat=lam, chi_hat=chi,
                     marginal_loglik=loglik, iteration=iteration)
    fit = GammaPoissonFit(
        params=params, names=ws.X.structural_names, beta_names=beta_names,
        se=None, se_beta=None, loglik=loglik, trace=tuple(trace),
        converged=converged, iterations=iteration, lambda_hat=lam, chi_hat=chi,
        design=ws.X, tol=tol, state=state, fixed_beta=fix_beta is not None)
    if compute_se and converged:
        se, se_beta, cov = _standard_errors(ws, fit)
        fit.se, fit.se_beta, fit.covariance = se, se_beta, cov
    return fit


def evaluate_params(ds: Dataset, params: GammaPoissonParams) -> GammaPoissonFit:
    """Wrap fixed parameter values in a fit object without estimating.

    Used to rebuild a fit from a saved report (or to inspect arbitrary
    parameter points): the marginal likelihood and posteriors are
    evaluated at ``params`` on ds.  No standard errors are attached and
    the iteration count is zero.
    """
    if params.spec is None:
        raise ModelSpecError("params carry no model spec")
    ws = _Workspace(ds, params.spec)
    if params.log_delta.size != ws.n_obs:
        raise ValueError(
            f"params.log_delta has length {params.log_delta.size}; the "
            f"dataset has {ws.n_obs} nuisance units")
    nonbase_labels = tuple(ws.X.category_labels[q] for q in ws.nonbase)
    loglik = ws.marginal(params.gamma, params.beta, params.log_delta)
    lam, chi = ws.posterior(params.gamma, params.beta, params.log_delta)
    full = GammaPoissonParams(gamma=params.gamma, beta=params.beta,
                              log_delta=params.log_delta, spec=params.spec,
                              names=ws.X.structural_names)
    state = EcmState(params=full, lambda_hat=lam, chi_hat=chi,
                     marginal_loglik=loglik, iteration=0)
    return GammaPoissonFit(
        params=full, names=ws.X.structural_names,
        beta_names=tuple(f"beta_{lab}" for lab in nonbase_labels),
        se=None, se_beta=None, loglik=loglik, trace=(loglik,),
        converged=True, iterations=0, lambda_hat=lam, chi_hat=chi,
        design=ws.X, tol=float("nan"), state=state)


def profiled_marginal_loglik(ds: Dataset, spec: ModelSpec, gamma: np.ndarray,
                             beta: np.ndarray,
                             log_delta0: np.ndarray | None = None) -> float:
    """Marginal log-likelihood with the nuisance constants profiled out."""
    ws = _Workspace(ds, spec)
    if log_delta0 is None:
        yplus = np.bincount(ws.X.nuisance_index, weights=ws.y, minlength=ws.n_obs)
        with np.errstate(divide="ignore"):
            log_delta0 = np.where(yplus > 0, np.log(np.maximum(yplus, 1.0))
                                  - np.log(ws.Q), -np.inf)
    log_delta = ws.profile_delta(gamma, beta, log_delta0)
    return ws.marginal(gamma, beta, log_delta)


def _standard_errors(ws: _Workspace, fit: GammaPoissonFit,
                     step_scale: float = 1e-4):
    """Central-difference Hessian of the delta-profiled marginal likelihood.

    Parameters are (gamma, log beta_free); beta entries sitting at the
    search bound, or held fixed, are excluded.  A Hessian that is not
    negative definite produces a warning and absent SEs.
    """
    p_gamma = len(fit.params.gamma)
    if fit.fixed_beta:
        free_beta = np.zeros(len(fit.params.beta), dtype=bool)
    else:
        free_beta = fit.params.beta > _BETA_LO * (1.0 + 1e-6)
    free_idx = np.flatnonzero(free_beta)
    phi0 = np.concatenate([fit.params.gamma,
                           np.log(fit.params.beta[free_idx])])
    p = len(phi0)
    base_log_delta = fit.params.log_delta

    def value(phi: np.ndarray) -> float:
        gamma = phi[:p_gamma]
        beta = fit.params.beta.copy()
        beta[free_idx] = np.exp(phi[p_gamma:])
        log_delta = ws.profile_delta(gamma, beta, base_log_delta)
        return ws.marginal(gamma, beta, log_delta)

    h = step_scale * np.maximum(1.0, np.abs(phi0))
    H = np.empty((p, p))
    f0 = value(phi0)
    for k in range(p):
        ek = np.zeros(p)
        ek[k] = h[k]
        H[k, k] = (value(phi0 + ek) - 2.0 * f0 + value(phi0 - ek)) / h[k] ** 2
    for k in range(p):
        for m in range(k + 1, p):
            ek = np.zeros(p)
            em = np.zeros(p)
            ek[k] = h[k]
            em[m] = h[m]
            H[k, m] = H[m, k] = (
                value(phi0 + ek + em) - value(phi0 + ek - em)
                - value(phi0 - ek + em) + value(phi0 - ek - em)
            ) / (4.0 * h[k] * h[m])
    H = 0.5 * (H + H.T)

    try:
        eigvals = np.linalg.eigvalsh(-H)
        if np.any(eigvals <= 0):
            raise np.linalg.LinAlgError("not positive definite")
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        warnings.warn("numerical Hessian of the marginal likelihood is not "
                      "negative definite; standard errors are unavailable",
                      UserWarning)
        return None, None, None
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    se_gamma = se[:p_gamma]
    se_beta = np.full(len(fit.params.beta), np.nan)
    # delta method: se(beta) = se(log beta) * beta
    se_beta[free_idx] = se[p_gamma:] * fit.params.beta[free_idx]
    if fit.fixed_beta:
        se_beta = None
    return se_gamma, se_beta, cov


def standard_errors(fit: GammaPoissonFit, ds: Dataset):
    """Recompute standard errors for a fit on its dataset.

    Returns (se_gamma, se_beta); entries are None when the numerical
    Hessian is not negative definite.
    """
    if fit.params.spec is None:
        raise ModelSpecError("params carry no model spec")
    ws = _Workspace(ds, fit.params.spec, X=fit.design)
    se, se_beta, _ = _standard_errors(ws, fit)
    return se, se_beta
