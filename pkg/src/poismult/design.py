"""Design-matrix construction for the Poisson surrogate model.

A multinomial model spec (which covariates enter, with a single generic
coefficient or one coefficient per non-baseline category) is translated
into the surrogate design: category-intercept columns, covariate and
covariate-by-category interaction columns, and a nuisance block of
per-observation (or per-covariate-combination) indicator columns that
carries the log delta constants.

The nuisance block is never materialized as dense columns.  It is stored
as an index array (row -> nuisance group), which downstream fitting code
exploits for block elimination.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .data import Dataset
from .exceptions import ModelSpecError, PredictionError

__all__ = [
    "CovariateTerm",
    "ModelSpec",
    "DesignMatrix",
    "build_design",
    "unique_covariate_groups",
]

_MODES = ("generic", "category_specific")
_RANDOM = ("none", "gamma_per_category")
_SUMCONST = ("per_observation", "pooled_categorical")


@dataclass(frozen=True)
class CovariateTerm:
    """One model term: a covariate (or interaction of several) plus its
    coefficient mode.

    generic: a single coefficient shared by all categories; the column
    carries the category-resolved covariate value.
    category_specific: one coefficient per non-baseline category.
    """

    covariates: tuple[str, ...]
    mode: str = "category_specific"

    def __post_init__(self):
        if isinstance(self.covariates, str):
            object.__setattr__(self, "covariates", (self.covariates,))
        else:
            object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.covariates:
            raise ModelSpecError("empty covariate term")
        if self.mode not in _MODES:
            raise ModelSpecError(f"unknown coefficient mode {self.mode!r}; "
                                 f"expected one of {_MODES}")

    @property
    def label(self) -> str:
        return ":".join(self.covariates)


@dataclass(frozen=True)
class ModelSpec:
    """Multinomial model specification.

    Category intercepts (one per non-baseline category) are always
    included; ``terms`` adds covariate effects on top.

    Attributes:
        terms: covariate terms, in the order their columns appear.
        baseline: reference category; None defers to the dataset's.
        random_effects: "none" for the fixed-effects model, or
            "gamma_per_category" for group-level Gamma rate multipliers.
        sum_constants_mode: "per_observation" gives every observation its
            own nuisance constant; "pooled_categorical" shares one
            constant per unique covariate combination (legal only when
            every covariate in the spec is categorical).
    """

    terms: tuple[CovariateTerm, ...] = ()
    baseline: str | None = None
    random_effects: str = "none"
    sum_constants_mode: str = "per_observation"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if not isinstance(t, CovariateTerm):
                raise ModelSpecError(f"term {t!r} is not a CovariateTerm")
        if self.random_effects not in _RANDOM:
            raise ModelSpecError(f"unknown random_effects {self.random_effects!r}; "
                                 f"expected one of {_RANDOM}")
        if self.sum_constants_mode not in _SUMCONST:
            raise ModelSpecError(f"unknown sum_constants_mode {self.sum_constants_mode!r}; "
                                 f"expected one of {_SUMCONST}")
        if self.sum_constants_mode == "pooled_categorical":
            modes = {t.mode for t in self.terms}
            if len(modes) > 1:
                raise ModelSpecError(
                    "pooled_categorical with mixed coefficient modes is unsupported; "
                    "use per_observation for partially-parallel models")
            if self.random_effects != "none":
                raise ModelSpecError(
                    "pooled_categorical cannot be combined with random effects; "
                    "pooling merges observations across groups")

    @property
    def covariate_names(self) -> tuple[str, ...]:
        seen: list[str] = []
        for t in self.terms:
            for name in t.covariates:
                if name not in seen:
                    seen.append(name)
        return tuple(seen)

    def to_dict(self) -> dict:
        return {
            "terms": [{"covariates": list(t.covariates), "mode": t.mode}
                      for t in self.terms],
            "baseline": self.baseline,
            "random_effects": self.random_effects,
            "sum_constants_mode": self.sum_constants_mode,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelSpec":
        try:
            terms = tuple(CovariateTerm(tuple(t["covariates"]), t["mode"])
                          for t in d.get("terms", ()))
            return cls(terms=terms, baseline=d.get("baseline"),
                       random_effects=d.get("random_effects", "none"),
                       sum_constants_mode=d.get("sum_constants_mode",
                                                "per_observation"))
        except (KeyError, TypeError) as e:
            raise ModelSpecError(f"malformed model spec mapping: {e}")


def unique_covariate_groups(ds: Dataset, spec: ModelSpec) -> tuple[tuple, ...]:
    """Partition observation ids into blocks with identical covariate values.

    The key is the full category-resolved value tuple of every covariate
    named by the spec, so category-specific covariates pool correctly.
    A spec with no covariates yields a single block.

    Raises ModelSpecError when any spec covariate is continuous.
    """
    for name in spec.covariate_names:
        if name not in ds.covariate_names:
            raise ModelSpecError(f"covariate {name!r} not in dataset "
                                 f"(has {ds.covariate_names})")
        if not ds.is_categorical(name):
            raise ModelSpecError(
                f"covariate {name!r} is continuous; pooling requires categorical covariates")
    blocks: dict[tuple, list] = {}
    order: list[tuple] = []
    for j, obs in enumerate(ds.obs_ids):
        key = tuple(tuple(ds.covariate(name)[j]) for name in spec.covariate_names)
        if key not in blocks:
            blocks[key] = []
            order.append(key)
        blocks[key].append(obs)
    return tuple(tuple(blocks[k]) for k in order)


def _first_observed_levels(values: np.ndarray) -> tuple[str, ...]:
    seen: list[str] = []
    for v in values.ravel():
        if v not in seen:
            seen.append(v)
    return tuple(seen)


def _term_value_columns(term: CovariateTerm, resolved: Mapping[str, np.ndarray],
                        encodings: Mapping[str, tuple[str, ...]],
                        strict_levels: bool) -> list[tuple[str, np.ndarray]]:
    """Expand one term into named (n_obs, Q) value arrays.

    Categorical covariates contribute one indicator per non-reference
    level; interactions are elementwise products of the factors.
    """
    cols: list[tuple[str, np.ndarray]] = [("", None)]
    for name in term.covariates:
        vals = resolved[name]
        if name in encodings:
            levels = encodings[name]
            if strict_levels:
                for v in np.unique(vals.astype(str)):
                    if v not in levels:
                        raise PredictionError(
                            f"covariate {name!r}: unseen level {v!r} "
                            f"(training levels: {levels})")
            factors = [(f"{name}{lvl}", (vals == lvl).astype(np.float64))
                       for lvl in levels[1:]]
        else:
            factors = [(name, vals.astype(np.float64))]
        new_cols = []
        for prefix, acc in cols:
            for fname, fvals in factors:
                label = fname if not prefix else f"{prefix}:{fname}"
                new_cols.append((label, fvals if acc is None else acc * fvals))
        cols = new_cols
    return cols


class DesignMatrix:
    """Surrogate design: dense structural block plus an indexed nuisance block.

    Rows are (nuisance group)-major with categories in label order, so row
    ``g * Q + q`` belongs to nuisance group g and category q.  Column
    indices treat the nuisance block as occupying positions
    0..n_nuisance-1 followed by the structural columns; ``full_matrix``
    materializes that layout for small problems.

    Attributes:
        structural: (n_rows, p) float matrix of structural columns.
        structural_names: names for the structural columns.
        nuisance_index: (n_rows,) int array, row -> nuisance column.
        nuisance_names: one name per nuisance column (I-indicators).
        y: (n_rows,) response counts aligned with the rows (aggregated
            over the block in pooled mode).
        row_category: (n_rows,) category index per row.
        group_of_nuisance: for grouped data, (n_nuisance,) group index
            per nuisance unit; None for independent data or pooled mode.
    """

    def __init__(self, structural: np.ndarray, structural_names: Sequence[str],
                 nuisance_index: np.ndarray | None = None,
                 nuisance_names: Sequence[str] = (),
                 y: np.ndarray | None = None,
                 row_category: np.ndarray | None = None,
                 category_labels: Sequence[str] = (),
                 baseline: str | None = None,
                 group_of_nuisance: np.ndarray | None = None,
                 group_labels: Sequence[Any] = (),
                 nuisance_ids: Sequence[Any] = (),
                 encodings: Mapping[str, tuple[str, ...]] | None = None,
                 spec: ModelSpec | None = None):
        self.structural = np.asarray(structural, dtype=np.float64)
        if self.structural.ndim != 2:
            raise ValueError("structural block must be 2-D")
        self.structural_names = tuple(structural_names)
        if len(self.structural_names) != self.structural.shape[1]:
            raise ValueError("structural_names length mismatch")
        self.nuisance_index = None if nuisance_index is None \
            else np.asarray(nuisance_index, dtype=np.int64)
        self.nuisance_names = tuple(nuisance_names)
        self.y = None if y is None else np.asarray(y, dtype=np.int64)
        self.row_category = None if row_category is None \
            else np.asarray(row_category, dtype=np.int64)
        self.category_labels = tuple(category_labels)
        self.baseline = baseline
        self.group_of_nuisance = None if group_of_nuisance is None \
            else np.asarray(group_of_nuisance, dtype=np.int64)
        self.group_labels = tuple(group_labels)
        self.nuisance_ids = tuple(nuisance_ids)
        self.encodings = dict(encodings or {})
        self.spec = spec

    @property
    def n_rows(self) -> int:
        return self.structural.shape[0]

    @property
    def p_structural(self) -> int:
        return self.structural.shape[1]

    @property
    def n_nuisance(self) -> int:
        return 0 if self.nuisance_index is None else len(self.nuisance_names)

    @property
    def column_names(self) -> tuple[str, ...]:
        return self.nuisance_names + self.structural_names

    @property
    def nuisance_columns(self) -> tuple[int, ...]:
        return tuple(range(self.n_nuisance))

    @property
    def structural_columns(self) -> tuple[int, ...]:
        return tuple(range(self.n_nuisance, self.n_nuisance + self.p_structural))

    def full_matrix(self) -> np.ndarray:
        """Materialize nuisance indicators as dense columns (small problems only)."""
        if self.nuisance_index is None:
            return self.structural.copy()
        full = np.zeros((self.n_rows, self.n_nuisance + self.p_structural))
        full[np.arange(self.n_rows), self.nuisance_index] = 1.0
        full[:, self.n_nuisance:] = self.structural
        return full

    def structural_rows_for(self, covariates: Mapping[str, Any]) -> np.ndarray:
        """Structural design rows (Q, p) for one new observation.

        ``covariates`` maps each spec covariate to a scalar or to a
        per-category mapping.  Unseen categorical levels raise
        PredictionError.
        """
        if self.spec is None or not self.category_labels:
            raise PredictionError("design carries no model spec; cannot encode new data")
        Q = len(self.category_labels)
        resolved: dict[str, np.ndarray] = {}
        for name in self.spec.covariate_names:
            if name not in covariates:
                raise PredictionError(f"missing covariate {name!r} for prediction")
            value = covariates[name]
            if isinstance(value, Mapping):
                try:
                    vals = [value[c] for c in self.category_labels]
                except KeyError as e:
                    raise PredictionError(
                        f"covariate {name!r}: no value for category {e.args[0]!r}")
            else:
                vals = [value] * Q
            if name in self.encodings:
                resolved[name] = np.array([[str(v) for v in vals]], dtype=object)
            else:
                resolved[name] = np.asarray([vals], dtype=np.float64)
        return _structural_block(self.spec, self.category_labels, self.baseline,
                                 resolved, self.encodings, n_obs=1,
                                 strict_levels=True)[0]

    def __repr__(self):
        return (f"DesignMatrix(n_rows={self.n_rows}, nuisance={self.n_nuisance}, "
                f"structural={self.p_structural})")


def _structural_block(spec: ModelSpec, labels: tuple[str, ...], baseline: str,
                      resolved: Mapping[str, np.ndarray],
                      encodings: Mapping[str, tuple[str, ...]], n_obs: int,
                      strict_levels: bool) -> tuple[np.ndarray, tuple[str, ...]]:
    """Build the structural columns as an (n_obs * Q, p) matrix.

    Rows are obs-major with categories in label order; the caller decides
    what an "obs" is (an observation or a pooled block).
    """
    Q = len(labels)
    b = labels.index(baseline)
    nonbase = [q for q in range(Q) if q != b]
    cat_of_row = np.tile(np.arange(Q), n_obs)

    cols: list[np.ndarray] = []
    names: list[str] = []
    for q in nonbase:
        cols.append((cat_of_row == q).astype(np.float64))
        names.append(f"C{labels[q]}")
    for term in spec.terms:
        for label, vals in _term_value_columns(term, resolved, encodings, strict_levels):
            flat = vals.reshape(-1)
            if term.mode == "generic":
                cols.append(flat)
                names.append(label)
            else:
                for q in nonbase:
                    cols.append(np.where(cat_of_row == q, flat, 0.0))
                    names.append(f"{label}:C{labels[q]}")
    if cols:
        mat = np.column_stack(cols)
    else:
        mat = np.empty((n_obs * Q, 0))
    return mat, tuple(names)


def build_design(ds: Dataset, spec: ModelSpec) -> DesignMatrix:
    """Translate a model spec into the Poisson-surrogate design.

    Args:
        ds: validated long-form dataset.
        spec: model specification; covariates must exist in ``ds``.

    Returns:
        DesignMatrix with category-intercept and covariate columns in the
        structural block and one nuisance indicator per observation (or
        per unique covariate combination in pooled mode, with counts
        aggregated over each block).

    Raises:
        ModelSpecError: unknown covariate; pooled mode with a continuous
            covariate; a generic term whose value never varies within an
            observation (such a column is aliased with the nuisance
            constants, so the coefficient is unidentifiable).
    """
    labels = ds.category_labels
    Q = ds.Q
    baseline = spec.baseline if spec.baseline is not None else ds.baseline
    if baseline not in labels:
        raise ModelSpecError(f"baseline {baseline!r} not among categories {labels}")
    for name in spec.covariate_names:
        if name not in ds.covariate_names:
            raise ModelSpecError(f"covariate {name!r} not in dataset "
                                 f"(has {ds.covariate_names})")

    encodings = {name: _first_observed_levels(ds.covariate(name))
                 for name in spec.covariate_names if ds.is_categorical(name)}
    pooled = spec.sum_constants_mode == "pooled_categorical"

    if pooled:
        blocks = unique_covariate_groups(ds, spec)
        obs_pos = {obs: j for j, obs in enumerate(ds.obs_ids)}
        n_units = len(blocks)
        y = np.zeros((n_units, Q), dtype=np.int64)
        resolved: dict[str, np.ndarray] = {
            name: np.empty((n_units, Q), dtype=ds.covariate(name).dtype)
            for name in spec.covariate_names}
        ids = []
        for bI, members in enumerate(blocks):
            rows = [obs_pos[obs] for obs in members]
            y[bI] = ds.counts[rows].sum(axis=0)
            for name in spec.covariate_names:
                resolved[name][bI] = ds.covariate(name)[rows[0]]
            ids.append(members)
        nuis_names = tuple(
            "I" + "|".join("/".join(map(str, resolved[name][bI]))
                           for name in spec.covariate_names) if spec.covariate_names
            else "I0"
            for bI in range(n_units))
        group_of_nuisance = None
        group_labels: tuple = ()
    else:
        n_units = ds.n_obs
        y = ds.counts
        resolved = {name: ds.covariate(name) for name in spec.covariate_names}
        ids = list(ds.obs_ids)
        nuis_names = tuple(f"I{obs}" for obs in ds.obs_ids)
        if ds.group_ids is not None:
            group_labels, gidx = ds.group_index()
            group_of_nuisance = gidx
        else:
            group_of_nuisance = None
            group_labels = ()

    structural, names = _structural_block(spec, labels, baseline, resolved,
                                          encodings, n_units, strict_levels=False)
    nuisance_index = np.repeat(np.arange(n_units), Q)
    row_category = np.tile(np.arange(Q), n_units)

    # A generic-mode column that is constant within every nuisance unit is a
    # linear combination of the indicator block: reject with a clear message
    # instead of letting the rank check downstream name the column.
    col = Q - 1
    for term in spec.terms:
        width = 1
        for name in term.covariates:
            width *= (len(encodings[name]) - 1) if name in encodings else 1
        if term.mode == "generic":
            for k in range(width):
                vals = structural[:, col + k].reshape(n_units, Q)
                if np.all(vals == vals[:, :1]):
                    raise ModelSpecError(
                        f"term {names[col + k]!r} has a generic coefficient but its "
                        "value is constant within every observation; "
                        "observation-specific covariates need category-specific "
                        "coefficients")
            col += width
        else:
            col += width * (Q - 1)

    return DesignMatrix(
        structural=structural, structural_names=names,
        nuisance_index=nuisance_index, nuisance_names=nuis_names,
        y=y.reshape(-1), row_category=row_category,
        category_labels=labels, baseline=baseline,
        group_of_nuisance=group_of_nuisance, group_labels=group_labels,
        nuisance_ids=tuple(ids), encodings=encodings, spec=spec)
