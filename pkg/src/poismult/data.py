"""Multinomial count data in long and short form.

The canonical in-memory representation is the long form: one record per
(observation, category) pair, with covariate values already resolved for
that pair.  Short form (one row per observation, one count column per
category) is supported for ingestion and export.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import DataValidationError, SchemaError

__all__ = [
    "LongRecord",
    "ShortRecord",
    "Dataset",
    "ingest_csv",
    "to_short",
]


@dataclass(frozen=True)
class LongRecord:
    """One (observation, category) cell: a scalar count plus resolved covariates."""

    obs_id: Any
    category: str
    count: int
    covariates: Mapping[str, Any] = field(default_factory=dict)
    group_id: Any = None


@dataclass(frozen=True)
class ShortRecord:
    """One observation: a count per category plus covariates.

    A covariate value may be a scalar (shared across categories) or a
    mapping from category label to value (category-specific, e.g. one
    price per brand).
    """

    obs_id: Any
    counts: Mapping[str, int]
    covariates: Mapping[str, Any] = field(default_factory=dict)
    group_id: Any = None


def _as_count(value, where: str) -> int:
    """Coerce a cell to a non-negative integer count."""
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise DataValidationError(f"non-numeric count {value!r} at {where}")
    if not np.isfinite(f) or f != int(f):
        raise DataValidationError(f"count {value!r} at {where} is not an integer")
    n = int(f)
    if n < 0:
        raise DataValidationError(f"negative count {n} at {where}")
    return n


def _is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and np.isnan(value))


class Dataset:
    """Validated long-form multinomial dataset.

    Records are stored observation-major with categories in label order,
    so row ``j * Q + q`` is observation ``j``, category ``q``.  Instances
    are immutable after construction and safe to share across workers.

    Attributes:
        category_labels: ordered category labels (length Q >= 2).
        baseline: the reference category (must be one of the labels).
        obs_ids: distinct observation ids, in first-appearance order.
        group_ids: one group id per observation, or None for independent data.
        counts: (n_obs, Q) int64 matrix of counts.
        covariate_names: names of the covariates carried by the records.
    """

    def __init__(self, records: Sequence[LongRecord], category_labels: Sequence[str],
                 baseline: str | None = None):
        labels = tuple(str(c) for c in category_labels)
        if len(labels) < 2:
            raise DataValidationError(f"need at least 2 categories, got {labels}")
        if len(set(labels)) != len(labels):
            raise DataValidationError(f"duplicate category labels in {labels}")
        if baseline is None:
            baseline = labels[0]
        baseline = str(baseline)
        if baseline not in labels:
            raise DataValidationError(f"baseline {baseline!r} not among categories {labels}")

        lab_index = {c: q for q, c in enumerate(labels)}
        Q = len(labels)

        cells: dict[Any, dict[int, LongRecord]] = {}
        obs_order: list[Any] = []
        for rec in records:
            cat = str(rec.category)
            if cat not in lab_index:
                raise DataValidationError(
                    f"obs {rec.obs_id!r}: unknown category {cat!r} (expected one of {labels})")
            if rec.obs_id not in cells:
                cells[rec.obs_id] = {}
                obs_order.append(rec.obs_id)
            slot = cells[rec.obs_id]
            q = lab_index[cat]
            if q in slot:
                raise DataValidationError(f"obs {rec.obs_id!r}: duplicate category {cat!r}")
            slot[q] = rec
        if not obs_order:
            raise DataValidationError("dataset has no records")

        cov_names: list[str] = []
        for rec in cells[obs_order[0]].values():
            for name in rec.covariates:
                if name not in cov_names:
                    cov_names.append(name)

        n_obs = len(obs_order)
        counts = np.zeros((n_obs, Q), dtype=np.int64)
        group_vals: list[Any] = []
        raw_cov = {name: np.empty((n_obs, Q), dtype=object) for name in cov_names}
        ordered: list[LongRecord] = []

        for j, obs in enumerate(obs_order):
            slot = cells[obs]
            if len(slot) != Q:
                got = sorted(labels[q] for q in slot)
                raise DataValidationError(
                    f"obs {obs!r}: expected {Q} categories, got {len(slot)} ({got})")
            groups_here = {slot[q].group_id for q in range(Q)}
            if len(groups_here) != 1:
                raise DataValidationError(f"obs {obs!r}: inconsistent group ids {groups_here}")
            group_vals.append(groups_here.pop())
            for q in range(Q):
                rec = slot[q]
                counts[j, q] = _as_count(rec.count, f"obs {obs!r}, category {labels[q]!r}")
                for name in cov_names:
                    if name not in rec.covariates or _is_missing(rec.covariates[name]):
                        raise DataValidationError(
                            f"obs {obs!r}, category {labels[q]!r}: missing covariate {name!r}")
                    raw_cov[name][j, q] = rec.covariates[name]
                ordered.append(rec)

        has_groups = any(g is not None for g in group_vals)
        if has_groups and any(g is None for g in group_vals):
            raise DataValidationError("some observations have a group id and some do not")

        self.category_labels = labels
        self.baseline = baseline
        self.records = tuple(ordered)
        self.obs_ids = tuple(obs_order)
        self.group_ids = tuple(group_vals) if has_groups else None
        self.counts = counts
        self.counts.setflags(write=False)
        self.covariate_names = tuple(cov_names)
        self._covariates = {}
        for name, arr in raw_cov.items():
            numeric = all(isinstance(v, (int, float, np.integer, np.floating))
                          for v in arr.ravel())
            if numeric:
                self._covariates[name] = arr.astype(np.float64)
            else:
                self._covariates[name] = np.array([[str(v) for v in row] for row in arr],
                                                  dtype=object)
            self._covariates[name].setflags(write=False)

    # ------------------------------------------------------------------
    # accessors
    # ------------------------------------------------------------------

    @property
    def Q(self) -> int:
        return len(self.category_labels)

    @property
    def n_obs(self) -> int:
        return len(self.obs_ids)

    @property
    def baseline_index(self) -> int:
        return self.category_labels.index(self.baseline)

    def covariate(self, name: str) -> np.ndarray:
        """(n_obs, Q) array of resolved values for one covariate."""
        if name not in self._covariates:
            raise KeyError(f"no covariate {name!r}; have {self.covariate_names}")
        return self._covariates[name]

    def is_categorical(self, name: str) -> bool:
        """True when the covariate carries string levels rather than numbers."""
        return self.covariate(name).dtype == object

    def total_counts(self) -> np.ndarray:
        """Per-observation multinomial sums, shape (n_obs,)."""
        return self.counts.sum(axis=1)

    def group_index(self) -> tuple[tuple, np.ndarray]:
        """Distinct group labels plus the per-observation group index.

        Raises when the dataset carries no group column.
        """
        if self.group_ids is None:
            raise DataValidationError("dataset has no group column (independent-data mode)")
        labels: list[Any] = []
        pos: dict[Any, int] = {}
        idx = np.empty(self.n_obs, dtype=np.int64)
        for j, g in enumerate(self.group_ids):
            if g not in pos:
                pos[g] = len(labels)
                labels.append(g)
            idx[j] = pos[g]
        return tuple(labels), idx

    def with_baseline(self, baseline: str) -> "Dataset":
        """Same data with a different reference category."""
        return Dataset(self.records, self.category_labels, baseline=baseline)

    def __repr__(self):
        grp = "grouped" if self.group_ids is not None else "independent"
        return (f"Dataset(n_obs={self.n_obs}, Q={self.Q}, "
                f"categories={list(self.category_labels)}, {grp})")

    # ------------------------------------------------------------------
    # construction helpers
    # ------------------------------------------------------------------

    @classmethod
    def from_short_records(cls, records: Sequence[ShortRecord],
                           category_labels: Sequence[str],
                           baseline: str | None = None) -> "Dataset":
        """Expand short records to Q long records each."""
        labels = [str(c) for c in category_labels]
        long_records: list[LongRecord] = []
        seen = set()
        for rec in records:
            if rec.obs_id in seen:
                raise DataValidationError(f"duplicate obs id {rec.obs_id!r} in short data")
            seen.add(rec.obs_id)
            for cat in labels:
                if cat not in rec.counts:
                    raise DataValidationError(f"obs {rec.obs_id!r}: no count for {cat!r}")
                cov = {}
                for name, value in rec.covariates.items():
                    if isinstance(value, Mapping):
                        if cat not in value:
                            raise DataValidationError(
                                f"obs {rec.obs_id!r}: covariate {name!r} has no value "
                                f"for category {cat!r}")
                        cov[name] = value[cat]
                    else:
                        cov[name] = value
                long_records.append(LongRecord(obs_id=rec.obs_id, category=cat,
                                               count=rec.counts[cat], covariates=cov,
                                               group_id=rec.group_id))
        return cls(long_records, labels, baseline=baseline)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, *, obs: str, category: str, count: str,
                   covariates: Sequence[str] = (), group: str | None = None,
                   category_order: Sequence[str] | None = None,
                   baseline: str | None = None) -> "Dataset":
        """Build a Dataset from a long-format DataFrame."""
        needed = [obs, category, count, *covariates] + ([group] if group else [])
        missing = [c for c in needed if c not in frame.columns]
        if missing:
            raise SchemaError(f"missing columns {missing}; file has {list(frame.columns)}")
        if len(frame) == 0:
            raise DataValidationError("no data rows")

        cats = frame[category].astype(str)
        if category_order is None:
            labels = list(dict.fromkeys(cats))
        else:
            labels = [str(c) for c in category_order]
        records = []
        for i in range(len(frame)):
            row = frame.iloc[i]
            cov = {name: row[name] for name in covariates}
            records.append(LongRecord(
                obs_id=row[obs], category=cats.iloc[i], count=row[count],
                covariates=cov, group_id=row[group] if group else None))
        return cls(records, labels, baseline=baseline)

    def to_frame(self) -> pd.DataFrame:
        """Long-format DataFrame mirroring the record order."""
        rows = []
        for j, obs in enumerate(self.obs_ids):
            for q, cat in enumerate(self.category_labels):
                row = {}
                if self.group_ids is not None:
                    row["group"] = self.group_ids[j]
                row["obs"] = obs
                row["category"] = cat
                row["count"] = int(self.counts[j, q])
                for name in self.covariate_names:
                    row[name] = self._covariates[name][j, q]
                rows.append(row)
        return pd.DataFrame(rows)


# ----------------------------------------------------------------------
# CSV ingestion
# ----------------------------------------------------------------------


def _read_frame(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise DataValidationError(f"{path}: empty file")
    if len(frame) == 0:
        raise DataValidationError(f"{path}: no data rows")
    return frame


def _require_columns(frame: pd.DataFrame, columns, path) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}; "
                          f"file has {list(frame.columns)}")


def ingest_csv(path, fmt: str, schema: Mapping[str, Any]) -> Dataset:
    """Read a CSV file into a validated long-form Dataset.

    ``schema`` maps column roles to column names:

    long format::

        {"obs": "obs", "category": "brand", "count": "count",
         "group": "id",                     # optional
         "covariates": ["price", "feature"],
         "category_order": [...], "baseline": "hiland"}   # optional

    short format::

        {"obs": "obs", "group": "id",
         "counts": {"yoplait": "yoplait", ...},   # label -> count column
         "covariates": {"feature": {"yoplait": "fy", ...},   # per-category
                        "income": "income"},                 # shared
         "baseline": ...}

    A missing ``group`` role selects independent-data mode.
    """
    if fmt not in ("short", "long"):
        raise SchemaError(f"unknown format {fmt!r}; expected 'short' or 'long'")
    frame = _read_frame(path)

    if fmt == "long":
        for role in ("obs", "category", "count"):
            if role not in schema:
                raise SchemaError(f"long schema needs {role!r}")
        return Dataset.from_frame(
            frame,
            obs=schema["obs"], category=schema["category"], count=schema["count"],
            covariates=tuple(schema.get("covariates", ())),
            group=schema.get("group"),
            category_order=schema.get("category_order"),
            baseline=schema.get("baseline"))

    # short format
    if "obs" not in schema or "counts" not in schema:
        raise SchemaError("short schema needs 'obs' and 'counts'")
    counts_map = schema["counts"]
    if not isinstance(counts_map, Mapping):
        counts_map = {str(c): c for c in counts_map}
    labels = [str(c) for c in counts_map]
    cov_map: Mapping[str, Any] = schema.get("covariates", {})

    flat_cols = [schema["obs"], *counts_map.values()]
    if schema.get("group"):
        flat_cols.append(schema["group"])
    for name, spec in cov_map.items():
        if isinstance(spec, Mapping):
            missing_cat = [c for c in labels if c not in spec]
            if missing_cat:
                raise SchemaError(f"covariate {name!r}: no column for categories {missing_cat}")
            flat_cols.extend(spec.values())
        else:
            flat_cols.append(spec)
    _require_columns(frame, flat_cols, path)

    records = []
    for i in range(len(frame)):
        row = frame.iloc[i]
        counts = {lab: row[col] for lab, col in counts_map.items()}
        cov: dict[str, Any] = {}
        for name, spec in cov_map.items():
            if isinstance(spec, Mapping):
                cov[name] = {str(lab): row[col] for lab, col in spec.items()}
            else:
                cov[name] = row[spec]
        records.append(ShortRecord(
            obs_id=row[schema["obs"]], counts=counts, covariates=cov,
            group_id=row[schema["group"]] if schema.get("group") else None))
    return Dataset.from_short_records(records, labels, baseline=schema.get("baseline"))


def to_short(ds: Dataset) -> list[ShortRecord]:
    """Collapse a long Dataset back to one record per observation.

    Covariates whose resolved values agree across the Q categories of an
    observation come back as scalars; the rest as per-category mappings.
    """
    out = []
    for j, obs in enumerate(ds.obs_ids):
        counts = {cat: int(ds.counts[j, q]) for q, cat in enumerate(ds.category_labels)}
        cov: dict[str, Any] = {}
        for name in ds.covariate_names:
            vals = ds.covariate(name)[j]
            if all(v == vals[0] for v in vals[1:]):
                cov[name] = vals[0]
            else:
                cov[name] = {cat: vals[q] for q, cat in enumerate(ds.category_labels)}
        out.append(ShortRecord(
            obs_id=obs, counts=counts, covariates=cov,
            group_id=None if ds.group_ids is None else ds.group_ids[j]))
    return out


def short_to_frame(records: Sequence[ShortRecord], category_labels: Sequence[str]) -> pd.DataFrame:
    """Tabulate short records; category-specific covariates become ``name_label`` columns."""
    labels = [str(c) for c in category_labels]
    rows = []
    for rec in records:
        row: dict[str, Any] = {}
        if rec.group_id is not None:
            row["group"] = rec.group_id
        row["obs"] = rec.obs_id
        for lab in labels:
            row[lab] = rec.counts[lab]
        for name, value in rec.covariates.items():
            if isinstance(value, Mapping):
                for lab in labels:
                    row[f"{name}_{lab}"] = value[lab]
            else:
                row[name] = value
        rows.append(row)
    return pd.DataFrame(rows)
