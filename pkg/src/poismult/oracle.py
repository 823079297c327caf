"""Brute-force verification machinery.

Everything here exists to check the production fitting code by an
independent route: simulation from the generative hierarchy, numerical
integration of the random effects where the production path uses a
closed form, a direct multinomial maximum-likelihood optimizer where the
production path fits a Poisson surrogate, and the count distributions
(negative binomial, negative multinomial) implied by the model.

The numerical routines deliberately lean on scipy/numpy primitives
(gammaln, logsumexp, Gauss-Legendre nodes, BFGS) rather than this
package's own special functions and IRLS, so that agreement between the
two routes is evidence rather than tautology.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize
from scipy.special import gammaincinv, gammainccinv, gammaln, logsumexp

from .data import Dataset, LongRecord
from .design import ModelSpec, build_design
from .exceptions import (DataValidationError, ModelSpecError,
                         NonConvergenceError, QuadratureError)
from .gamma_poisson import GammaPoissonParams

__all__ = [
    "simulate",
    "quadrature_marginal",
    "quadrature_posterior_mean",
    "direct_multinomial_mle",
    "DirectMleResult",
    "NegMultinomial",
    "NegBinomial",
    "nm_pmf",
    "nb_pmf",
    "nm_logpmf",
    "nb_logpmf",
    "nm_sample",
]


# ----------------------------------------------------------------------
# simulation from the generative hierarchy
# ----------------------------------------------------------------------


def _draw_covariate(rng: np.random.Generator, kind, J: int, Q: int) -> np.ndarray:
    if kind == "numeric":
        return rng.standard_normal((J, Q))
    if kind == "numeric_obs":
        return np.repeat(rng.standard_normal(J)[:, None], Q, axis=1)
    if isinstance(kind, tuple) and len(kind) == 2 and kind[0] in (
            "categorical", "categorical_by_category"):
        levels = np.asarray(kind[1], dtype=object)
        if kind[0] == "categorical":
            draw = levels[rng.integers(0, len(levels), J)]
            return np.repeat(draw[:, None], Q, axis=1)
        return levels[rng.integers(0, len(levels), (J, Q))]
    raise ValueError(f"unknown covariate kind {kind!r}")


def simulate(spec: ModelSpec, theta: GammaPoissonParams, I: int, J: int,
             seed: int, covariate_kinds: Mapping[str, object] | None = None,
             ) -> Dataset:
    """Draw a grouped dataset from the Gamma-Poisson hierarchy.

    For each group, category rate factors lambda_q are drawn from
    Gamma(1/beta_q, scale beta_q) (the baseline factor is 1), then
    counts Y ~ Poisson(delta * lambda * zeta) with zeta = exp(x'gamma)
    on the design that ``spec`` induces over the drawn covariates.

    Covariates named by the spec are drawn per ``covariate_kinds``
    (default "numeric"): "numeric" is N(0,1) per observation-category
    pair, "numeric_obs" N(0,1) shared across categories,
    ("categorical", levels) a uniform level per observation, and
    ("categorical_by_category", levels) a uniform level per pair.

    theta.gamma must match the structural design layout; theta.log_delta
    of length I*J supplies per-observation constants (empty means all
    delta = 1).  Group streams are seeded as (seed, group), so results
    do not depend on how work is distributed over workers.
    """
    Q = theta.Q
    labels = tuple(str(q + 1) for q in range(Q))
    kinds = dict(covariate_kinds or {})
    names = spec.covariate_names

    cov_draws: dict[str, list[np.ndarray]] = {name: [] for name in names}
    lambdas = np.ones((I, Q))
    baseline = spec.baseline if spec.baseline is not None else labels[0]
    if baseline not in labels:
        raise ModelSpecError(f"baseline {baseline!r} not among simulated labels {labels}")
    b_idx = labels.index(baseline)
    nonbase = [q for q in range(Q) if q != b_idx]

    for i in range(I):
        rng_cov = np.random.default_rng([seed, i, 0])
        for name in names:
            cov_draws[name].append(
                _draw_covariate(rng_cov, kinds.get(name, "numeric"), J, Q))
        rng_lam = np.random.default_rng([seed, i, 1])
        shape = 1.0 / theta.beta
        lambdas[i, nonbase] = rng_lam.gamma(shape, scale=theta.beta)

    def records_with_counts(counts: np.ndarray | None) -> list[LongRecord]:
        recs = []
        for i in range(I):
            for j in range(J):
                for q in range(Q):
                    cov = {name: cov_draws[name][i][j, q] for name in names}
                    c = 0 if counts is None else int(counts[(i * J + j) * Q + q])
                    recs.append(LongRecord(
                        obs_id=f"g{i + 1}_o{j + 1}", category=labels[q], count=c,
                        covariates=cov, group_id=f"g{i + 1}"))
        return recs

    skeleton = Dataset(records_with_counts(None), labels, baseline=baseline)
    X = build_design(skeleton, spec)
    if len(theta.gamma) != X.p_structural:
        raise ValueError(
            f"theta.gamma has {len(theta.gamma)} entries but the design needs "
            f"{X.p_structural}: {X.structural_names}")
    zeta = np.exp(X.structural @ theta.gamma)
    if theta.log_delta.size == 0:
        delta_obs = np.ones(I * J)
    elif theta.log_delta.size == I * J:
        with np.errstate(over="ignore"):
            delta_obs = np.exp(theta.log_delta)
    else:
        raise ValueError(f"theta.log_delta must be empty or length {I * J}")

    mu = delta_obs[X.nuisance_index] * lambdas[
        X.group_of_nuisance[X.nuisance_index], X.row_category] * zeta
    counts = np.empty(len(mu), dtype=np.int64)
    rows_per_group = J * Q
    for i in range(I):
        rng_counts = np.random.default_rng([seed, i, 2])
        sl = slice(i * rows_per_group, (i + 1) * rows_per_group)
        counts[sl] = rng_counts.poisson(mu[sl])

    return Dataset(records_with_counts(counts), labels, baseline=baseline)


# ----------------------------------------------------------------------
# quadrature over the random effects
# ----------------------------------------------------------------------

_T_LO, _T_HI = -40.0, 40.0
_NODES = 16
_MAX_DOUBLINGS = 11


def _factor_window(a: float, ysum: float, wsum: float,
                   rtol: float) -> tuple[float, float]:
    """t-window holding all but a negligible share of one factor's mass.

    In lambda = exp(t) space the factor integrand is proportional to a
    Gamma(a + ysum, rate a + wsum) density, so its exact quantiles bound
    the truncated mass on both sides; the upper limit uses shape
    a + ysum + 1 so the same window also covers posterior-mean
    numerators.  Keeping the window tight around the mass is what lets
    panel doubling resolve near-degenerate shapes (a ~ 1e8, where the
    integrand is a spike of width 1/sqrt(a)).
    """
    S = a + ysum
    R = a + wsum
    eps = max(rtol * 1e-3, 1e-250)
    log_R = np.log(R)
    # P(S, x) <= x^S / Gamma(S+1), solved for x in log space; valid for
    # every shape and immune to the underflow that hits the exact
    # quantile when S is tiny
    lo = (np.log(eps) + gammaln(S + 1.0)) / S - log_R
    if S >= 0.1:
        lo = max(lo, float(np.log(gammaincinv(S, eps))) - log_R)
    hi = float(np.log(gammainccinv(S + 1.0, eps))) - log_R
    return min(lo, hi - 1e-3), hi


def _lower_window(a: float, ysum: float, wsum: float, rtol: float) -> float:
    """Lower t-limit so the truncated tail mass is negligible at ``rtol``.

    The integrand decays like exp((a + ysum) t) toward t -> -inf; the
    relative mass below ``lo`` is bounded by
    exp((a+ysum) lo) (a+wsum)^(a+ysum) / Gamma(a+ysum+1), which this
    solves for a bound three orders below ``rtol``.
    """
    s = a + ysum
    lo = (np.log(rtol) - 7.0 + gammaln(s + 1.0)) / s - np.log(a + wsum)
    return float(min(_T_LO, lo))


def _log_integral(g, rtol: float, base_panels: int = 4,
                  extra_log_factor=None, window=None):
    """log of integral(exp(g(t)) dt) over the window, panel-doubled.

    ``g`` maps a node vector to log-integrand values.  When
    ``extra_log_factor`` is given (a function of t), the log-integral of
    exp(g(t) + extra(t)) is returned as a second value using the same
    nodes, so ratios share their quadrature error.  Convergence requires
    two consecutive doublings inside tolerance.
    """
    x, w = leggauss(_NODES)
    t_lo, t_hi = window if window is not None else (_T_LO, _T_HI)
    prev = prev2 = None
    stable = 0
    panels = base_panels
    for _ in range(_MAX_DOUBLINGS + 1):
        edges = np.linspace(t_lo, t_hi, panels + 1)
        half = 0.5 * (edges[1] - edges[0])
        mids = 0.5 * (edges[:-1] + edges[1:])
        t = (mids[:, None] + half * x[None, :]).ravel()
        logw = np.tile(np.log(half * w), panels)
        vals = g(t) + logw
        cur = float(logsumexp(vals))
        cur2 = float(logsumexp(vals + extra_log_factor(t))) \
            if extra_log_factor is not None else None
        if prev is not None:
            err = abs(cur - prev)
            err2 = 0.0 if cur2 is None else abs(cur2 - prev2)
            if max(err, err2) <= rtol * max(1.0, abs(cur)) + 1e-13:
                stable += 1
                if stable >= 2:
                    return (cur, cur2) if extra_log_factor is not None else cur
            else:
                stable = 0
        prev, prev2 = cur, cur2
        panels *= 2
    achieved = abs(cur - prev) if prev is not None else np.inf
    raise QuadratureError(
        f"quadrature did not reach relative error {rtol:g} "
        f"(achieved {achieved:.3e} at {panels // 2} panels)", achieved=achieved)


def _group_arrays(ds: Dataset, params: GammaPoissonParams):
    """Per-row rates and index arrays shared by the quadrature routines."""
    if params.spec is None:
        raise ModelSpecError("params carry no model spec")
    X = build_design(ds, params.spec)
    if X.group_of_nuisance is None:
        raise DataValidationError("dataset has no group column")
    zeta = np.exp(X.structural @ params.gamma)
    if params.log_delta.size != X.n_nuisance:
        raise ValueError(f"params.log_delta must have length {X.n_nuisance}")
    with np.errstate(over="ignore"):
        w = np.exp(params.log_delta)[X.nuisance_index] * zeta
    row_group = X.group_of_nuisance[X.nuisance_index]
    return X, zeta, w, row_group


def _log_gamma_prior(lam: np.ndarray, a: float) -> np.ndarray:
    # Gamma(shape a, scale 1/a): unit mean, variance 1/a
    return a * np.log(a) - gammaln(a) + (a - 1.0) * np.log(lam) - a * lam


def _log_gamma_excess(a: float) -> float:
    """lgGamma(a) - a*log(a) + a, without large-argument cancellation.

    The direct difference loses 8 digits at a ~ 1e8 (terms of size 1e9
    cancelling to O(10)); the Stirling series is exact to double
    precision from a = 1e4 up.
    """
    if a >= 1e4:
        return float(0.5 * np.log(2.0 * np.pi / a) + 1.0 / (12.0 * a)
                     - 1.0 / (360.0 * a ** 3) + 1.0 / (1260.0 * a ** 5))
    return float(gammaln(a) - a * np.log(a) + a)


def quadrature_marginal(ds: Dataset, params: GammaPoissonParams,
                        model: str = "poisson_surrogate",
                        rtol: float = 1e-10) -> float:
    """Marginal log-likelihood by numerical integration of the random effects.

    model="poisson_surrogate" integrates the Poisson-mixture integrand
    (it factorizes over group-category pairs, so each factor is a 1-D
    integral); model="multinomial_mixed" integrates the multinomial
    likelihood over the joint factor vector on a tensor-product grid and
    is restricted to desk scale (I<=5, J<=5, Q<=4).

    Integration substitutes lambda = exp(t) on t in [-40, 40] with
    Gauss-Legendre panels, doubled until the result is stable to
    ``rtol``; failure to stabilize raises QuadratureError carrying the
    achieved error.
    """
    X, zeta, w, row_group = _group_arrays(ds, params)
    y = X.y.astype(np.float64)
    Q = len(X.category_labels)
    I = len(X.group_labels)
    b_idx = X.category_labels.index(X.baseline)
    beta = params.beta
    nonbase = [q for q in range(Q) if q != b_idx]

    if model == "poisson_surrogate":
        total = 0.0
        for i in range(I):
            in_group = row_group == i
            for q in range(Q):
                rows = in_group & (X.row_category == q)
                yr = y[rows]
                wr = w[rows]
                const = float(np.sum(np.where(yr > 0, yr * np.log(
                    np.where(wr > 0, wr, 1.0)), 0.0)) - np.sum(gammaln(yr + 1)))
                Ysum = float(np.sum(yr))
                Wsum = float(np.sum(wr))
                if q == b_idx:
                    total += const - Wsum
                    continue
                a = 1.0 / beta[nonbase.index(q)]
                S = a + Ysum
                R = a + Wsum
                t_star = np.log1p((Ysum - Wsum) / R)

                # S*t - R*exp(t) == S*t_star - S - S*(expm1(u) - u) at
                # t = t_star + u; the centered form keeps node values
                # O(1) even for near-degenerate shapes (a ~ 1e8), where
                # evaluating R*exp(t) directly loses 8 digits
                def g(u, S=S):
                    return -S * (np.expm1(u) - u)

                lo, hi = _factor_window(a, Ysum, Wsum, rtol)
                total += (const - _log_gamma_excess(a) + S * t_star - Ysum
                          + _log_integral(g, rtol,
                                          window=(lo - t_star, hi - t_star)))
        return total

    if model == "multinomial_mixed":
        if I > 5 or Q > 4 or (X.n_nuisance // max(I, 1)) > 5:
            raise ValueError("multinomial_mixed quadrature is desk-scale only "
                             "(I<=5, J<=5, Q<=4)")
        return _mixed_marginal(X, zeta, row_group, y, beta, nonbase, b_idx, rtol)

    raise ValueError(f"unknown model {model!r}")


def _mixed_marginal(X, zeta, row_group, y, beta, nonbase, b_idx, rtol) -> float:
    """Tensor-product quadrature of the multinomial mixed likelihood."""
    Q = len(X.category_labels)
    I = len(X.group_labels)
    D = Q - 1
    x16, w16 = leggauss(_NODES)
    total = 0.0
    for i in range(I):
        obs_here = np.flatnonzero(X.group_of_nuisance == i)
        in_group = row_group == i
        lows = [_lower_window(1.0 / beta[d],
                              float(y[in_group & (X.row_category == q)].sum()),
                              0.0, rtol)
                for d, q in enumerate(nonbase)]
        prev = None
        panels = 2
        stable = 0
        result = None
        for _ in range(_MAX_DOUBLINGS + 1):
            axes_t, axes_lw = [], []
            for lo in lows:
                edges = np.linspace(lo, _T_HI, panels + 1)
                half = 0.5 * (edges[1] - edges[0])
                mids = 0.5 * (edges[:-1] + edges[1:])
                axes_t.append((mids[:, None] + half * x16[None, :]).ravel())
                axes_lw.append(np.tile(np.log(half * w16), panels))
            grids = np.meshgrid(*axes_t, indexing="ij")
            tg = np.stack([g.ravel() for g in grids], axis=1)
            lwg = sum(np.meshgrid(*axes_lw, indexing="ij")[d].ravel()
                      for d in range(D))
            K = tg.shape[0]
            lam = np.ones((K, Q))
            logdens = np.zeros(K)
            for d, q in enumerate(nonbase):
                lam_q = np.exp(tg[:, d])
                lam[:, q] = lam_q
                a = 1.0 / beta[d]
                logdens += _log_gamma_prior(lam_q, a) + tg[:, d]
            for obs in obs_here:
                rows = np.flatnonzero(X.nuisance_index == obs)
                zr = zeta[rows]
                yr = y[rows]
                yp = yr.sum()
                if yp == 0:
                    continue
                cell = lam[:, X.row_category[rows]] * zr[None, :]
                denom = cell.sum(axis=1)
                logdens += (gammaln(yp + 1) - np.sum(gammaln(yr + 1))
                            + _cell_dot_log(cell, yr) - yp * np.log(denom))
            cur = float(logsumexp(logdens + lwg))
            if prev is not None and abs(cur - prev) <= rtol * max(1.0, abs(cur)) + 1e-13:
                stable += 1
                if stable >= 2:
                    result = cur
                    break
            elif prev is not None:
                stable = 0
            prev = cur
            panels *= 2
            if panels ** D * _NODES ** D > 40_000_000:
                break
        if result is None:
            achieved = abs(cur - prev) if prev is not None else np.inf
            raise QuadratureError(
                f"tensor quadrature for group {i} did not stabilize "
                f"(achieved {achieved:.3e})", achieved=achieved)
        total += result
    return total


def _cell_dot_log(cell: np.ndarray, yr: np.ndarray) -> np.ndarray:
    """sum_q y_q log(cell_q) per grid point, skipping zero counts."""
    out = np.zeros(cell.shape[0])
    for k in np.flatnonzero(yr > 0):
        out += yr[k] * np.log(cell[:, k])
    return out


def quadrature_posterior_mean(ds: Dataset, params: GammaPoissonParams,
                              rtol: float = 1e-12) -> np.ndarray:
    """Posterior means of the rate factors by numerical integration.

    Returns an (I, Q) matrix; the baseline column is exactly 1.  Each
    non-baseline entry is the ratio of two integrals evaluated on shared
    nodes, so quadrature error largely cancels.
    """
    X, zeta, w, row_group = _group_arrays(ds, params)
    y = X.y.astype(np.float64)
    Q = len(X.category_labels)
    I = len(X.group_labels)
    b_idx = X.category_labels.index(X.baseline)
    nonbase = [q for q in range(Q) if q != b_idx]
    out = np.ones((I, Q))
    for i in range(I):
        in_group = row_group == i
        for d, q in enumerate(nonbase):
            rows = in_group & (X.row_category == q)
            Ysum = float(np.sum(y[rows]))
            Wsum = float(np.sum(w[rows]))
            a = 1.0 / params.beta[d]
            S = a + Ysum
            R = a + Wsum
            t_star = np.log1p((Ysum - Wsum) / R)

            # centered integrand, same identity as in quadrature_marginal;
            # prior and mode constants cancel in the ratio
            def g(u, S=S):
                return -S * (np.expm1(u) - u)

            lo, hi = _factor_window(a, Ysum, Wsum, rtol)
            log_norm, log_num = _log_integral(
                g, rtol, extra_log_factor=lambda u: u,
                window=(lo - t_star, hi - t_star))
            out[i, q] = np.exp(t_star + log_num - log_norm)
    return out


# ----------------------------------------------------------------------
# direct multinomial maximum likelihood
# ----------------------------------------------------------------------


@dataclass
class DirectMleResult:
    """Direct multinomial MLE, optimized without the Poisson surrogate."""

    gamma: np.ndarray
    se: np.ndarray
    covariance: np.ndarray
    loglik: float
    names: tuple[str, ...]
    gradient_norm: float
    iterations: int


def direct_multinomial_mle(ds: Dataset, spec: ModelSpec,
                           grad_tol: float = 1e-8,
                           max_newton: int = 100) -> DirectMleResult:
    """Maximize the multinomial log-likelihood directly.

    Quasi-Newton (BFGS with the analytic gradient) followed by Newton
    polishing with the analytic Hessian until the gradient's max
    component is below ``grad_tol``.  Standard errors come from the
    inverse negative Hessian at the optimum.  Raises NonConvergenceError
    when the gradient cannot be driven to tolerance (separated data).
    """
    if spec.random_effects != "none":
        raise ModelSpecError("direct_multinomial_mle handles fixed-effects specs only")
    X = build_design(ds, spec)
    Q = len(X.category_labels)
    Xs = X.structural
    y = X.y.astype(np.float64)
    n_units = X.n_nuisance
    yplus = y.reshape(n_units, Q).sum(axis=1)
    p = Xs.shape[1]

    const = float(np.sum(gammaln(yplus + 1)) - np.sum(gammaln(y + 1)))

    def parts(gamma):
        eta = (Xs @ gamma).reshape(n_units, Q)
        lse = logsumexp(eta, axis=1)
        probs = np.exp(eta - lse[:, None])
        ll = const + float(np.sum(y * eta.reshape(-1)) - np.sum(yplus * lse))
        mu = (yplus[:, None] * probs).reshape(-1)
        grad = Xs.T @ (y - mu)
        return ll, grad, mu, probs

    def hessian(mu):
        Xw = Xs * mu[:, None]
        H = Xs.T @ Xw
        U = np.empty((n_units, p))
        for k in range(p):
            U[:, k] = Xw[:, k].reshape(n_units, Q).sum(axis=1)
        ok = yplus > 0
        V = U[ok] / yplus[ok, None]
        return -(H - V.T @ U[ok])

    res = minimize(lambda g: -parts(g)[0], np.zeros(p),
                   jac=lambda g: -parts(g)[1], method="BFGS",
                   options={"gtol": 1e-9, "maxiter": 500})
    gamma = res.x
    trace = []
    for it in range(max_newton):
        ll, grad, mu, _ = parts(gamma)
        trace.append(ll)
        gnorm = float(np.max(np.abs(grad))) if p else 0.0
        if gnorm < grad_tol:
            break
        H = hessian(mu)
        try:
            step = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError:
            raise NonConvergenceError("singular Hessian in direct multinomial MLE",
                                      trace=tuple(trace))
        scale = 1.0
        for _ in range(40):
            cand = gamma + scale * step
            ll_c = parts(cand)[0]
            if np.isfinite(ll_c) and ll_c >= ll - 1e-12:
                break
            scale *= 0.5
        gamma = gamma + scale * step
    ll, grad, mu, _ = parts(gamma)
    gnorm = float(np.max(np.abs(grad))) if p else 0.0
    if gnorm >= grad_tol:
        raise NonConvergenceError(
            f"direct multinomial MLE stalled with max |gradient| = {gnorm:.3e} "
            f"(tolerance {grad_tol:g}); the data may be separated",
            trace=tuple(trace))
    H = hessian(mu)
    cov = np.linalg.inv(-H)
    cov = 0.5 * (cov + cov.T)
    return DirectMleResult(gamma=gamma, se=np.sqrt(np.maximum(np.diag(cov), 0.0)),
                           covariance=cov, loglik=ll, names=X.structural_names,
                           gradient_norm=gnorm, iterations=len(trace))


# ----------------------------------------------------------------------
# appendix distributions
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class NegBinomial:
    """Shape r > 0, success probability p in (0,1).

    pmf(x) = Gamma(r+x) / (x! Gamma(r)) * (1-p)^r * p^x.
    """

    r: float
    p: float

    def __post_init__(self):
        if not (self.r > 0):
            raise ValueError(f"domain error: r must be positive, got {self.r}")
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"domain error: p must be in (0,1), got {self.p}")


@dataclass(frozen=True)
class NegMultinomial:
    """Shape x0 > 0 and probability vector (p0, p1, ..., pn) summing to 1.

    The mean vector of the category counts is (x0/p0) * (p1, ..., pn).
    """

    x0: float
    p: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        if not (self.x0 > 0):
            raise ValueError(f"domain error: x0 must be positive, got {self.x0}")
        if len(self.p) < 2:
            raise ValueError("p must contain p0 and at least one category")
        if any(not (0.0 < v < 1.0) for v in self.p):
            raise ValueError(f"domain error: probabilities must be in (0,1), got {self.p}")
        if abs(sum(self.p) - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got sum {sum(self.p)}")

    @property
    def mean(self) -> np.ndarray:
        return (self.x0 / self.p[0]) * np.asarray(self.p[1:])


def nb_logpmf(d: NegBinomial, x) -> np.ndarray | float:
    xa = np.asarray(x, dtype=np.float64)
    if np.any(xa < 0) or np.any(xa != np.floor(xa)):
        raise ValueError(f"domain error: x must be a non-negative integer, got {x}")
    out = (gammaln(d.r + xa) - gammaln(xa + 1) - gammaln(d.r)
           + d.r * np.log1p(-d.p) + xa * np.log(d.p))
    return float(out) if out.ndim == 0 else out


def nb_pmf(d: NegBinomial, x):
    return np.exp(nb_logpmf(d, x))


def nm_logpmf(d: NegMultinomial, x: Sequence[int]) -> float:
    xa = np.asarray(x, dtype=np.float64)
    if xa.shape != (len(d.p) - 1,):
        raise ValueError(f"x must have {len(d.p) - 1} entries, got {xa.shape}")
    if np.any(xa < 0) or np.any(xa != np.floor(xa)):
        raise ValueError(f"domain error: counts must be non-negative integers, got {x}")
    pa = np.asarray(d.p)
    return float(gammaln(d.x0 + xa.sum()) - gammaln(d.x0) + d.x0 * np.log(pa[0])
                 + np.sum(xa * np.log(pa[1:]) - gammaln(xa + 1)))


def nm_pmf(d: NegMultinomial, x: Sequence[int]) -> float:
    return float(np.exp(nm_logpmf(d, x)))


def nm_sample(d: NegMultinomial, size: int, seed: int) -> np.ndarray:
    """Draw category-count vectors via the Gamma-Poisson mixture.

    lambda ~ Gamma(x0, scale 1/p0), X_i | lambda ~ Poisson(lambda * p_i).
    """
    rng = np.random.default_rng(seed)
    lam = rng.gamma(d.x0, 1.0 / d.p[0], size=size)
    return rng.poisson(lam[:, None] * np.asarray(d.p[1:])[None, :])
