"""Command-line front end: convert, fit, predict, simulate, verify.

Exit codes: 0 success, 2 validation error (bad flags, malformed data,
unusable model spec), 3 non-convergence (partial results are still
written, marked converged=false).  Errors go to standard error with a
machine-parsable ``poismult:error:<kind>:`` prefix.  JSON artifacts are
written with sorted keys and full double precision, so identical inputs
produce byte-identical output; tables printed to standard output round
to 6 significant digits.

The only environment variable read is POISMULT_LOG (debug, info,
warning, error), controlling log verbosity on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .data import Dataset, ingest_csv, short_to_frame, to_short
from .design import CovariateTerm, ModelSpec, build_design
from .exceptions import (AliasingError, DataValidationError, ModelSpecError,
                         NonConvergenceError, PoismultError, PredictionError,
                         QuadratureError, SchemaError)
from .fixed import fit_fixed
from .gamma_poisson import (GammaPoissonParams, evaluate_params, fit_ecm,
                            marginal_loglik)
from .oracle import quadrature_marginal, quadrature_posterior_mean, simulate
from .predict import ebp_lambda, prediction_frame

__all__ = ["RunConfig", "run", "main"]

log = logging.getLogger("poismult")

_MODE_ALIASES = {"generic": "generic", "specific": "category_specific",
                 "category_specific": "category_specific"}


@dataclass
class RunConfig:
    """One validated invocation: data location, model flags, outputs.

    Built from parsed argv before any computation touches the data;
    field validation failures surface as validation errors (exit 2).
    ``extra`` holds subcommand-specific settings (simulation sizes,
    model report path, verification target, ...).
    """

    subcommand: str
    data: str | None = None
    fmt: str = "long"
    schema: str | None = None
    obs: str = "obs"
    category: str = "category"
    count: str = "count"
    group: str | None = None
    baseline: str | None = None
    terms: tuple[CovariateTerm, ...] = ()
    kinds: tuple[str, ...] = ()
    pooled: bool = False
    tol: float = 1e-8
    max_iter: int = 5000
    seed: int = 0
    out: str | None = None
    out_format: str = "json"
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tol <= 0:
            raise ModelSpecError(f"--tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ModelSpecError(f"--max-iter must be >= 1, got {self.max_iter}")
        if self.threads < 1:
            raise ModelSpecError(f"--threads must be >= 1, got {self.threads}")
        if self.out_format not in ("json", "csv"):
            raise ModelSpecError(f"unknown output format {self.out_format!r}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        terms, kinds = [], []
        for raw in getattr(args, "covariate", None) or []:
            term, kind = _parse_term(raw)
            terms.append(term)
            kinds.append(kind)
        known = {"data", "format", "schema", "obs", "category", "count",
                 "group", "baseline", "pooled", "tol", "max_iter", "seed",
                 "out", "out_format", "threads", "covariate", "subcommand",
                 "func"}
        extra = {k: v for k, v in vars(args).items() if k not in known}
        return cls(
            subcommand=args.subcommand,
            data=getattr(args, "data", None),
            fmt=getattr(args, "format", "long"),
            schema=getattr(args, "schema", None),
            obs=getattr(args, "obs", "obs"),
            category=getattr(args, "category", "category"),
            count=getattr(args, "count", "count"),
            group=getattr(args, "group", None),
            baseline=getattr(args, "baseline", None),
            terms=tuple(terms), kinds=tuple(kinds),
            pooled=getattr(args, "pooled", False),
            tol=getattr(args, "tol", 1e-8),
            max_iter=getattr(args, "max_iter", 5000),
            seed=getattr(args, "seed", 0),
            out=getattr(args, "out", None),
            out_format=getattr(args, "out_format", "json"),
            threads=args.threads,
            extra=extra)


def _err(kind: str, exc: BaseException) -> None:
    print(f"poismult:error:{kind}: {exc}", file=sys.stderr)


def _setup_logging() -> None:
    level = os.environ.get("POISMULT_LOG", "warning").upper()
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parse_term(raw: str) -> tuple[CovariateTerm, str]:
    """NAME[:MODE[:KIND]] -> (term, simulation kind).

    NAME may join covariates with '*' for an interaction.  MODE is
    generic, specific, or category_specific (default).  KIND only
    matters for `simulate`: numeric (default), numeric-obs, or
    cat=LEVEL,LEVEL,...
    """
    parts = raw.split(":")
    if not parts[0]:
        raise ModelSpecError(f"empty covariate name in {raw!r}")
    names = tuple(p.strip() for p in parts[0].split("*"))
    mode = "category_specific"
    kind = "numeric"
    rest = parts[1:]
    if rest and rest[0] in _MODE_ALIASES:
        mode = _MODE_ALIASES[rest[0]]
        rest = rest[1:]
    if rest:
        kind = rest[0]
        rest = rest[1:]
    if rest:
        raise ModelSpecError(f"cannot parse covariate flag {raw!r}")
    return CovariateTerm(names, mode), kind


def _load_dataset(cfg: RunConfig) -> Dataset:
    names: list[str] = []
    for t in cfg.terms:
        for n in t.covariates:
            if n not in names:
                names.append(n)
    if cfg.schema:
        with open(cfg.schema) as fh:
            schema = json.load(fh)
    elif cfg.fmt == "short":
        raise SchemaError("short format needs --schema with the counts mapping")
    else:
        schema = {"obs": cfg.obs, "category": cfg.category,
                  "count": cfg.count, "covariates": names}
        if cfg.group:
            schema["group"] = cfg.group
        if cfg.baseline:
            schema["baseline"] = cfg.baseline
    return ingest_csv(cfg.data, cfg.fmt, schema)


def _print_table(title: str, rows: list[dict], columns: list[str]) -> None:
    print(title)
    widths = {c: max(len(c), 12) for c in columns}
    print("  ".join(c.rjust(widths[c]) for c in columns))
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c)
            if v is None:
                cells.append("-".rjust(widths[c]))
            elif isinstance(v, str):
                cells.append(v.rjust(widths[c]))
            else:
                cells.append(f"{v:.6g}".rjust(widths[c]))
        print("  ".join(cells))


def _model_spec(cfg: RunConfig, random_effects: str) -> ModelSpec:
    mode = "pooled_categorical" if cfg.pooled else "per_observation"
    return ModelSpec(terms=cfg.terms, baseline=cfg.baseline,
                     random_effects=random_effects, sum_constants_mode=mode)


def _parse_fix_beta(raw: str | None):
    if raw is None:
        return None
    vals = [float(v) for v in str(raw).split(",")]
    return vals[0] if len(vals) == 1 else np.array(vals)


# ----------------------------------------------------------------------
# subcommands


def _cmd_convert(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    if cfg.extra["to"] == "long":
        frame = ds.to_frame()
    else:
        frame = short_to_frame(to_short(ds), ds.category_labels)
    if cfg.out:
        frame.to_csv(cfg.out, index=False)
        log.info("wrote %d rows to %s", len(frame), cfg.out)
    else:
        frame.to_csv(sys.stdout, index=False)
    return 0


def _cmd_fit_fixed(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    spec = _model_spec(cfg, "none")
    try:
        fit = fit_fixed(ds, spec, tol=cfg.tol, max_iter=cfg.max_iter)
    except NonConvergenceError as e:
        if cfg.out:
            _write_json(cfg.out, {"model": "fixed", "converged": False,
                                  "error": str(e)})
        raise
    _print_table("fixed-effects fit", fit.coefficient_table(),
                 ["name", "estimate", "se", "z"])
    print(f"loglik {fit.multinomial_loglik:.6g}  iterations {fit.iterations}")
    if fit.infinite_estimates:
        print(f"unbounded estimates: {', '.join(fit.infinite_estimates)}")
    if cfg.out:
        if cfg.out_format == "csv":
            import pandas as pd
            pd.DataFrame(fit.coefficient_table()).to_csv(cfg.out, index=False)
        else:
            _write_json(cfg.out, fit.to_dict())
    return 0


def _cmd_fit_gp(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    spec = _model_spec(cfg, "gamma_per_category")
    fix_beta = _parse_fix_beta(cfg.extra.get("fix_beta"))
    try:
        fit = fit_ecm(ds, spec, tol=cfg.tol, max_iter=cfg.max_iter,
                      fix_beta=fix_beta,
                      compute_se=not cfg.extra.get("no_se", False))
    except NonConvergenceError as e:
        if cfg.out:
            _write_json(cfg.out, {"model": "gamma_poisson",
                                  "converged": False, "error": str(e)})
        raise
    _print_table("gamma-poisson fit", fit.coefficient_table(),
                 ["name", "estimate", "se", "z"])
    _print_table("variance parameters", fit.beta_table(),
                 ["name", "estimate", "se"])
    print(f"loglik {fit.loglik:.6g}  iterations {fit.iterations}  "
          f"converged {str(fit.converged).lower()}")
    if cfg.out:
        if cfg.out_format == "csv":
            import pandas as pd
            pd.DataFrame(fit.coefficient_table() + fit.beta_table()) \
                .to_csv(cfg.out, index=False)
        else:
            _write_json(cfg.out, fit.to_dict())
    if not fit.converged:
        _err("nonconvergence",
             NonConvergenceError(f"ECM hit the iteration cap ({fit.iterations})"))
        return 3
    return 0


def _params_from_report(report: dict) -> GammaPoissonParams:
    try:
        spec = ModelSpec.from_dict(report["spec"])
        return GammaPoissonParams(
            gamma=np.asarray(report["gamma_values"], dtype=np.float64),
            beta=np.asarray(report["beta_values"], dtype=np.float64),
            log_delta=np.asarray(report["log_delta"], dtype=np.float64),
            spec=spec, names=tuple(report.get("structural_names", ())))
    except KeyError as e:
        raise SchemaError(f"model report is missing field {e.args[0]!r}; "
                          "re-run fit-gp with --out to produce a full report")


def _cmd_predict(cfg: RunConfig) -> int:
    with open(cfg.extra["model"]) as fh:
        report = json.load(fh)
    if report.get("model") != "gamma_poisson":
        raise SchemaError(
            f"predict needs a fit-gp report, got model={report.get('model')!r}")
    if not report.get("converged", False):
        raise PredictionError("the saved fit did not converge; refit first")
    params = _params_from_report(report)
    ds = _load_dataset(cfg)
    X = build_design(ds, params.spec)
    want = [str(v) for v in X.nuisance_ids]
    have = report.get("nuisance_ids", [])
    if want != have:
        raise PredictionError(
            "the data file does not match the fitted model's observations; "
            "predict expects the training data file")
    fit = evaluate_params(ds, params)
    frame = prediction_frame(fit, ds)
    if cfg.out:
        frame.to_csv(cfg.out, index=False)
        log.info("wrote %d rows to %s", len(frame), cfg.out)
    else:
        frame.to_csv(sys.stdout, index=False)
    return 0


def _cmd_simulate(cfg: RunConfig) -> int:
    Q = cfg.extra["Q"]
    if Q < 2:
        raise ModelSpecError(f"--Q must be at least 2, got {Q}")
    spec = ModelSpec(terms=cfg.terms, baseline=cfg.baseline,
                     random_effects="gamma_per_category")
    n_struct = Q - 1 + sum(1 if t.mode == "generic" else Q - 1
                           for t in cfg.terms)
    gamma = np.array([float(v) for v in cfg.extra["gamma"].split(",")]) \
        if cfg.extra.get("gamma") else np.zeros(n_struct)
    beta = np.array([float(v) for v in cfg.extra["beta"].split(",")]) \
        if cfg.extra.get("beta") else np.full(Q - 1, 1.0)
    if len(beta) != Q - 1:
        raise ModelSpecError(f"--beta needs {Q - 1} values for Q={Q}")
    covariate_kinds = {}
    for t, kind in zip(cfg.terms, cfg.kinds):
        for name in t.covariates:
            if kind == "numeric":
                covariate_kinds[name] = "numeric"
            elif kind in ("numeric-obs", "numeric_obs"):
                covariate_kinds[name] = "numeric_obs"
            elif kind.startswith("cat="):
                covariate_kinds[name] = ("categorical", kind[4:].split(","))
            else:
                raise ModelSpecError(f"unknown covariate kind {kind!r}")
    theta = GammaPoissonParams(gamma=gamma, beta=beta,
                               log_delta=np.zeros(0), spec=spec)
    ds = simulate(spec, theta, cfg.extra["I"], cfg.extra["J"], seed=cfg.seed,
                  covariate_kinds=covariate_kinds or None)
    frame = ds.to_frame()
    if cfg.out:
        frame.to_csv(cfg.out, index=False)
    else:
        frame.to_csv(sys.stdout, index=False)
    log.info("simulated %d groups x %d observations, Q=%d",
             cfg.extra["I"], cfg.extra["J"], Q)
    return 0


def _cmd_verify(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    spec = _model_spec(cfg, "gamma_per_category")
    rtol = cfg.extra["rtol"]
    fit = fit_ecm(ds, spec, tol=cfg.tol, max_iter=cfg.max_iter,
                  fix_beta=_parse_fix_beta(cfg.extra.get("fix_beta")),
                  compute_se=False)
    closed = marginal_loglik(ds, fit.params)
    quad = quadrature_marginal(ds, fit.params, "poisson_surrogate",
                               rtol=min(rtol * 1e-2, 1e-10))
    rel = abs(closed - quad) / max(1.0, abs(closed))
    lam = ebp_lambda(fit, ds)
    post = quadrature_posterior_mean(ds, fit.params, rtol=1e-12)
    post_err = float(np.max(np.abs(lam - post)))
    ok = rel <= rtol and post_err <= rtol
    report = {
        "closed_form_loglik": float(closed),
        "quadrature_loglik": float(quad),
        "rel_error": float(rel),
        "posterior_max_abs_error": post_err,
        "rtol": float(rtol),
        "fit_converged": bool(fit.converged),
        "ok": bool(ok),
    }
    print(json.dumps(report, sort_keys=True, indent=2))
    if cfg.out:
        _write_json(cfg.out, report)
    if not ok:
        _err("verify", PoismultError(
            f"oracle disagreement: rel_error={rel:.3e}, "
            f"posterior_max_abs_error={post_err:.3e}, target {rtol:g}"))
        return 1
    return 0


_COMMANDS = {
    "convert": _cmd_convert,
    "fit-fixed": _cmd_fit_fixed,
    "fit-gp": _cmd_fit_gp,
    "predict": _cmd_predict,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
}


# ----------------------------------------------------------------------
# argument parsing


def _add_data_flags(p: argparse.ArgumentParser,
                    format_flag: str = "--format") -> None:
    p.add_argument("--data", required=True, help="input CSV path")
    p.add_argument(format_flag, dest="format", choices=["long", "short"],
                   default="long", help="input layout (default long)")
    p.add_argument("--schema", help="JSON file mapping column roles; "
                   "required for short format")
    p.add_argument("--obs", default="obs", help="observation id column")
    p.add_argument("--category", default="category", help="category column")
    p.add_argument("--count", default="count", help="count column")
    p.add_argument("--group", default=None, help="group id column")
    p.add_argument("--baseline", default=None, help="reference category")
    p.add_argument("--covariate", action="append", metavar="NAME[:MODE]",
                   help="covariate term; MODE is generic, specific, or "
                   "category_specific (default); repeatable; NAME may "
                   "join columns with '*' for interactions")


def _add_fit_flags(p: argparse.ArgumentParser, tol: float, max_iter: int) -> None:
    p.add_argument("--tol", type=float, default=tol)
    p.add_argument("--max-iter", type=int, default=max_iter, dest="max_iter")
    p.add_argument("--out", help="write a JSON (or CSV) report here")
    p.add_argument("--out-format", choices=["json", "csv"], default="json",
                   dest="out_format")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="poismult",
        description="multinomial regression via Poisson surrogate models")
    ap.add_argument("--threads", type=int, default=1,
                    help="cap BLAS parallelism (default 1 for "
                    "reproducible runs)")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("convert", help="reshape between long and short CSV")
    _add_data_flags(p, format_flag="--from")
    p.add_argument("--to", choices=["long", "short"], required=True)
    p.add_argument("--out", help="output CSV path (default stdout)")

    p = sub.add_parser("fit-fixed", help="exact fixed-effects multinomial fit")
    _add_data_flags(p)
    p.add_argument("--pooled", action="store_true",
                   help="pool nuisance constants over identical covariate "
                   "combinations (all-categorical specs)")
    _add_fit_flags(p, tol=1e-10, max_iter=100)

    p = sub.add_parser("fit-gp", help="Gamma-Poisson mixed fit via ECM")
    _add_data_flags(p)
    p.add_argument("--fix-beta", dest="fix_beta", default=None,
                   help="hold variance parameters fixed (one value or "
                   "comma list)")
    p.add_argument("--no-se", action="store_true", dest="no_se",
                   help="skip the numerical-Hessian standard errors")
    _add_fit_flags(p, tol=1e-8, max_iter=5000)

    p = sub.add_parser("predict", help="EBP multipliers and fitted counts")
    _add_data_flags(p)
    p.add_argument("--model", required=True, help="fit-gp JSON report")
    p.add_argument("--out", help="output CSV path (default stdout)")

    p = sub.add_parser("simulate", help="draw a dataset from the model")
    p.add_argument("--I", type=int, required=True, help="number of groups")
    p.add_argument("--J", type=int, required=True, help="observations per group")
    p.add_argument("--Q", type=int, required=True, help="number of categories")
    p.add_argument("--gamma", help="comma-separated structural coefficients")
    p.add_argument("--beta", help="comma-separated variance parameters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", default=None)
    p.add_argument("--covariate", action="append",
                   metavar="NAME[:MODE[:KIND]]",
                   help="KIND: numeric (per category), numeric-obs, or "
                   "cat=LEVEL,LEVEL,...")
    p.add_argument("--out", help="output CSV path (default stdout)")

    p = sub.add_parser("verify",
                       help="check the closed form against quadrature on "
                       "one instance")
    _add_data_flags(p)
    p.add_argument("--rtol", type=float, default=1e-8,
                   help="agreement target (default 1e-8)")
    p.add_argument("--fix-beta", dest="fix_beta", default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=5000, dest="max_iter")
    p.add_argument("--out", help="write the verification report here")
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    """Parse argv, dispatch, and map exceptions to exit codes."""
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        with threadpool_limits(limits=cfg.threads):
            return _COMMANDS[cfg.subcommand](cfg)
    except NonConvergenceError as e:
        _err("nonconvergence", e)
        return 3
    except QuadratureError as e:
        _err("quadrature", e)
        return 1
    except (SchemaError, DataValidationError, ModelSpecError, AliasingError,
            PredictionError) as e:
        _err("validation", e)
        return 2
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        _err("validation", e)
        return 2


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))
