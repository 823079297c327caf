"""Poisson log-linear fitting by Newton iteration with offsets.

The nuisance indicator block of the surrogate design is never entered
into the linear algebra.  Given the structural coefficients, each
nuisance constant has the analytic optimum delta_g = y_g+ / zeta_g+, so
every iteration profiles the constants out and takes a Newton step on
the profiled objective.  The step matrix is the Schur complement of the
full Fisher information, which keeps the solve at the structural
dimension (a handful of columns) regardless of how many observations
carry their own constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .design import DesignMatrix
from .exceptions import AliasingError, NonConvergenceError
from .special import log_factorial

__all__ = ["GlmFit", "fit_poisson"]

_MAX_HALVINGS = 10


@dataclass
class GlmFit:
    """Fitted Poisson log-linear model.

    ``coefficients`` lays out the full vector in design-column order:
    the per-group log delta values (``-inf`` for groups with zero total
    count) followed by the structural coefficients.  ``covariance`` is
    the inverse Fisher information of the structural block after the
    nuisance constants are profiled out; for a design without a nuisance
    block it is the plain (X'WX)^-1.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    fitted_values: np.ndarray
    deviance: float
    log_likelihood: float
    iterations: int
    converged: bool
    structural_names: tuple[str, ...]
    gamma: np.ndarray
    se: np.ndarray
    delta: np.ndarray | None
    trace: tuple[float, ...]

    def max_score_residual(self, X: DesignMatrix, y: np.ndarray) -> float:
        """max |X'(y - mu)| over all columns, nuisance block included."""
        resid = np.asarray(y, dtype=np.float64) - self.fitted_values
        parts = [self.structural_gradient_abs(X, resid)]
        if X.nuisance_index is not None:
            parts.append(np.abs(np.bincount(X.nuisance_index, weights=resid,
                                            minlength=X.n_nuisance)))
        return float(max(p.max() if p.size else 0.0 for p in parts))

    @staticmethod
    def structural_gradient_abs(X: DesignMatrix, resid: np.ndarray) -> np.ndarray:
        return np.abs(X.structural.T @ resid)


def _first_dependent_column(M: np.ndarray, names, tol: float = 1e-8) -> str | None:
    """Name of the first column linearly dependent on the ones before it."""
    basis: list[np.ndarray] = []
    for k in range(M.shape[1]):
        v = M[:, k].astype(np.float64).copy()
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            return names[k]
        for b in basis:
            v -= (b @ M[:, k]) * b
        norm = np.linalg.norm(v)
        if norm < tol * norm0:
            return names[k]
        basis.append(v / norm)
    return None


def _center_within_groups(M: np.ndarray, gidx: np.ndarray, G: int) -> np.ndarray:
    counts = np.bincount(gidx, minlength=G).astype(np.float64)
    out = M.astype(np.float64).copy()
    for k in range(M.shape[1]):
        means = np.bincount(gidx, weights=M[:, k], minlength=G) / counts
        out[:, k] -= means[gidx]
    return out


def fit_poisson(X: DesignMatrix, y: np.ndarray | None = None,
                offset: np.ndarray | None = None,
                tol: float = 1e-10, max_iter: int = 100) -> GlmFit:
    """Maximize the Poisson log-likelihood sum(y*log(mu) - mu - log y!).

    Args:
        X: design; a nuisance index present means the per-group constants
            are profiled analytically (see module docstring).
        y: counts per design row; defaults to the counts stored on ``X``.
        offset: added to the linear predictor, default zero.
        tol: relative deviance-change stopping threshold.
        max_iter: Newton iteration cap; hitting it returns converged=False.

    Raises:
        AliasingError: the structural block is rank deficient (the first
            dependent column is named).
        NonConvergenceError: the iteration diverged (overflowing rates
            that step-halving cannot rescue).
    """
    if y is None:
        y = X.y
    if y is None:
        raise ValueError("no response: pass y or use a design that carries counts")
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if X.structural.shape[0] != n:
        raise ValueError(f"design has {X.structural.shape[0]} rows, y has {n}")
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=np.float64)
    Xs = X.structural
    p = Xs.shape[1]
    gidx = X.nuisance_index
    G = X.n_nuisance

    if gidx is not None:
        yplus = np.bincount(gidx, weights=y, minlength=G)
        live = yplus > 0
        centered = _center_within_groups(Xs, gidx, G)
    else:
        yplus = None
        live = None
        centered = Xs
    if p:
        dep = _first_dependent_column(centered, X.structural_names)
        if dep is not None:
            raise AliasingError(dep)

    log_yfact = float(np.sum(log_factorial(y)))

    def profile(gamma):
        """mu, delta, deviance, loglik at the profiled nuisance optimum."""
        with np.errstate(over="ignore", invalid="ignore"):
            zeta = np.exp(Xs @ gamma + offset)
            if gidx is None:
                mu = zeta
                delta = None
            else:
                zeta_g = np.bincount(gidx, weights=zeta, minlength=G)
                with np.errstate(divide="ignore"):
                    delta = np.where(live, yplus / zeta_g, 0.0)
                mu = delta[gidx] * zeta
            pos = y > 0
            dev_terms = np.where(pos, y * (np.log(np.where(pos, y, 1.0))
                                           - np.log(np.where(mu > 0, mu, 1.0))), 0.0)
            dev = 2.0 * float(np.sum(dev_terms - (y - mu)))
            ll = float(np.sum(np.where(pos, y * np.log(np.where(mu > 0, mu, 1.0)), 0.0)
                              - mu)) - log_yfact
        return mu, delta, dev, ll

    def newton_matrix(mu):
        """Schur complement of the full Fisher information on the structural block."""
        Xw = Xs * mu[:, None]
        S = Xs.T @ Xw
        if gidx is not None:
            U = np.empty((G, p))
            for k in range(p):
                U[:, k] = np.bincount(gidx, weights=Xw[:, k], minlength=G)
            mu_g = np.bincount(gidx, weights=mu, minlength=G)
            ok = mu_g > 0
            V = U[ok] / mu_g[ok, None]
            S = S - V.T @ U[ok]
        return S

    # start from least squares on the log scale (group effects removed by
    # within-group centering so the nuisance block does not bias the start)
    z = np.log(y + 0.5) - offset
    if p:
        if gidx is not None:
            zc = z - (np.bincount(gidx, weights=z, minlength=G)
                      / np.bincount(gidx, minlength=G))[gidx]
        else:
            zc = z
        gamma = np.linalg.lstsq(centered, zc, rcond=None)[0]
    else:
        gamma = np.zeros(0)

    mu, delta, dev, ll = profile(gamma)
    if not np.isfinite(dev):
        gamma = np.zeros(p)
        mu, delta, dev, ll = profile(gamma)
    trace = [dev]
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        if p == 0:
            converged = True
            break
        grad = Xs.T @ (y - mu)
        S = newton_matrix(mu)
        try:
            step = cho_solve(cho_factor(S), grad)
        except (LinAlgError, ValueError):
            dep = _first_dependent_column(centered * np.sqrt(np.maximum(mu, 0))[:, None],
                                          X.structural_names)
            if dep is not None:
                raise AliasingError(dep)
            raise NonConvergenceError("singular information matrix", trace=tuple(trace))

        scale = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            cand = gamma + scale * step
            mu_c, delta_c, dev_c, ll_c = profile(cand)
            if np.isfinite(dev_c) and dev_c <= dev + 1e-12 * (1.0 + abs(dev)):
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            if not np.isfinite(dev_c):
                raise NonConvergenceError(
                    f"diverged at iteration {iterations}: rates overflow",
                    trace=tuple(trace))
            # no decreasing step exists: already at the optimum numerically
            converged = True
            break
        dev_old = dev
        gamma, mu, delta, dev, ll = cand, mu_c, delta_c, dev_c, ll_c
        trace.append(dev)
        if abs(dev - dev_old) < tol * (0.1 + abs(dev)):
            converged = True
            break

    if p:
        S = newton_matrix(mu)
        try:
            covariance = cho_solve(cho_factor(S), np.eye(p))
        except (LinAlgError, ValueError):
            raise NonConvergenceError("singular information matrix at the optimum",
                                      trace=tuple(trace))
        covariance = 0.5 * (covariance + covariance.T)
        se = np.sqrt(np.maximum(np.diag(covariance), 0.0))
    else:
        covariance = np.zeros((0, 0))
        se = np.zeros(0)

    if gidx is not None:
        with np.errstate(divide="ignore"):
            log_delta = np.where(delta > 0, np.log(np.where(delta > 0, delta, 1.0)),
                                 -np.inf)
        coefficients = np.concatenate([log_delta, gamma])
    else:
        coefficients = gamma.copy()

    return GlmFit(coefficients=coefficients, covariance=covariance,
                  fitted_values=mu, deviance=dev, log_likelihood=ll,
                  iterations=iterations, converged=converged,
                  structural_names=X.structural_names, gamma=gamma, se=se,
                  delta=delta, trace=tuple(trace))
