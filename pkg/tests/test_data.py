"""Dataset construction, validation, CSV ingestion, and reshaping."""

import json

import numpy as np
import pandas as pd
import pytest

from poismult.data import (Dataset, LongRecord, ShortRecord, ingest_csv,
                           short_to_frame, to_short)
from poismult.exceptions import DataValidationError, SchemaError

from conftest import long_records


class TestDatasetConstruction:
    def test_counts_layout(self, choice_dataset):
        ds = choice_dataset
        assert ds.Q == 3
        assert ds.n_obs == 6
        assert ds.counts.shape == (6, 3)
        assert ds.counts.dtype == np.int64
        assert ds.total_counts().tolist() == [12] * 6

    def test_baseline_defaults_to_first_label(self, choice_dataset):
        assert choice_dataset.baseline == "a"
        assert choice_dataset.baseline_index == 0

    def test_with_baseline(self, choice_dataset):
        ds2 = choice_dataset.with_baseline("c")
        assert ds2.baseline == "c"
        np.testing.assert_array_equal(ds2.counts, choice_dataset.counts)

    def test_covariate_resolution(self, choice_dataset):
        price = choice_dataset.covariate("price")
        assert price.shape == (6, 3)
        assert not choice_dataset.is_categorical("price")
        assert choice_dataset.is_categorical("region")
        region = choice_dataset.covariate("region")
        assert set(region.ravel()) == {"north", "south"}

    def test_unknown_covariate(self, choice_dataset):
        with pytest.raises(KeyError, match="no covariate"):
            choice_dataset.covariate("nope")

    def test_group_index(self, choice_dataset):
        labels, idx = choice_dataset.group_index()
        assert labels == ("g1", "g2")
        assert idx.tolist() == [0, 0, 0, 1, 1, 1]

    def test_group_index_requires_groups(self, independent_dataset):
        assert independent_dataset.group_ids is None
        with pytest.raises(DataValidationError, match="no group column"):
            independent_dataset.group_index()

    def test_counts_are_immutable(self, choice_dataset):
        with pytest.raises(ValueError):
            choice_dataset.counts[0, 0] = 99


class TestDatasetValidation:
    def test_duplicate_category(self):
        rows = [("o1", "a", 1, {}, None), ("o1", "a", 2, {}, None),
                ("o1", "b", 1, {}, None)]
        with pytest.raises(DataValidationError, match="duplicate category"):
            Dataset(long_records(rows), ["a", "b"])

    def test_missing_category(self):
        rows = [("o1", "a", 1, {}, None)]
        with pytest.raises(DataValidationError, match="expected 2 categories"):
            Dataset(long_records(rows), ["a", "b"])

    def test_unknown_category(self):
        rows = [("o1", "z", 1, {}, None), ("o1", "b", 1, {}, None)]
        with pytest.raises(DataValidationError, match="unknown category"):
            Dataset(long_records(rows), ["a", "b"])

    def test_negative_count(self):
        rows = [("o1", "a", -1, {}, None), ("o1", "b", 1, {}, None)]
        with pytest.raises(DataValidationError):
            Dataset(long_records(rows), ["a", "b"])

    def test_fractional_count(self):
        rows = [("o1", "a", 1.5, {}, None), ("o1", "b", 1, {}, None)]
        with pytest.raises(DataValidationError):
            Dataset(long_records(rows), ["a", "b"])

    def test_inconsistent_groups_within_observation(self):
        recs = [LongRecord("o1", "a", 1, {}, "g1"),
                LongRecord("o1", "b", 1, {}, "g2")]
        with pytest.raises(DataValidationError, match="inconsistent group"):
            Dataset(recs, ["a", "b"])

    def test_partial_grouping_rejected(self):
        recs = [LongRecord("o1", "a", 1, {}, "g1"),
                LongRecord("o1", "b", 1, {}, "g1"),
                LongRecord("o2", "a", 1, {}, None),
                LongRecord("o2", "b", 1, {}, None)]
        with pytest.raises(DataValidationError, match="some observations"):
            Dataset(recs, ["a", "b"])

    def test_missing_covariate_value(self):
        recs = [LongRecord("o1", "a", 1, {"x": 1.0}, None),
                LongRecord("o1", "b", 1, {}, None)]
        with pytest.raises(DataValidationError, match="missing covariate"):
            Dataset(recs, ["a", "b"])

    def test_nan_covariate_value(self):
        recs = [LongRecord("o1", "a", 1, {"x": np.nan}, None),
                LongRecord("o1", "b", 1, {"x": 1.0}, None)]
        with pytest.raises(DataValidationError, match="missing covariate"):
            Dataset(recs, ["a", "b"])

    def test_empty(self):
        with pytest.raises(DataValidationError, match="no records"):
            Dataset([], ["a", "b"])

    def test_bad_baseline(self):
        rows = [("o1", "a", 1, {}, None), ("o1", "b", 1, {}, None)]
        with pytest.raises(DataValidationError, match="baseline"):
            Dataset(long_records(rows), ["a", "b"], baseline="z")

    def test_single_category_rejected(self):
        with pytest.raises(DataValidationError, match="at least 2"):
            Dataset([LongRecord("o1", "a", 1)], ["a"])


class TestShortRecords:
    def test_from_short_records(self):
        recs = [ShortRecord("o1", {"a": 3, "b": 1},
                            {"price": {"a": 1.0, "b": 2.0}, "income": 40.0},
                            group_id="g1"),
                ShortRecord("o2", {"a": 0, "b": 5},
                            {"price": {"a": 1.1, "b": 1.9}, "income": 55.0},
                            group_id="g1")]
        ds = Dataset.from_short_records(recs, ["a", "b"])
        assert ds.counts.tolist() == [[3, 1], [0, 5]]
        price = ds.covariate("price")
        assert price[0].tolist() == [1.0, 2.0]
        income = ds.covariate("income")
        assert income[1].tolist() == [55.0, 55.0]
        assert ds.group_ids == ("g1", "g1")

    def test_round_trip_through_short(self, choice_dataset):
        shorts = to_short(choice_dataset)
        back = Dataset.from_short_records(shorts, choice_dataset.category_labels)
        np.testing.assert_array_equal(back.counts, choice_dataset.counts)
        assert back.obs_ids == choice_dataset.obs_ids
        np.testing.assert_array_equal(back.covariate("price"),
                                      choice_dataset.covariate("price"))

    def test_short_to_frame_columns(self, choice_dataset):
        frame = short_to_frame(to_short(choice_dataset),
                               choice_dataset.category_labels)
        assert len(frame) == choice_dataset.n_obs
        for lab in choice_dataset.category_labels:
            assert lab in frame.columns
        assert "price_a" in frame.columns


class TestCsvIngestion:
    def _long_csv(self, tmp_path, ds):
        path = tmp_path / "long.csv"
        ds.to_frame().to_csv(path, index=False)
        return path

    def test_long_round_trip(self, tmp_path, choice_dataset):
        path = self._long_csv(tmp_path, choice_dataset)
        ds = ingest_csv(path, "long",
                        {"obs": "obs", "category": "category",
                         "count": "count", "group": "group",
                         "covariates": ["price", "region"]})
        np.testing.assert_array_equal(ds.counts, choice_dataset.counts)
        assert ds.group_ids is not None

    def test_long_without_group_column(self, tmp_path, independent_dataset):
        path = self._long_csv(tmp_path, independent_dataset)
        ds = ingest_csv(path, "long",
                        {"obs": "obs", "category": "category",
                         "count": "count", "covariates": ["x"]})
        assert ds.group_ids is None

    def test_category_order_and_baseline(self, tmp_path, choice_dataset):
        path = self._long_csv(tmp_path, choice_dataset)
        ds = ingest_csv(path, "long",
                        {"obs": "obs", "category": "category",
                         "count": "count",
                         "category_order": ["c", "b", "a"], "baseline": "b"})
        assert ds.category_labels == ("c", "b", "a")
        assert ds.baseline == "b"

    def test_short_format(self, tmp_path):
        frame = pd.DataFrame({
            "hh": ["h1", "h2"], "grp": ["g1", "g1"],
            "n_a": [2, 0], "n_b": [1, 4],
            "price_a": [1.0, 1.1], "price_b": [2.0, 1.9],
            "income": [40.0, 55.0]})
        path = tmp_path / "short.csv"
        frame.to_csv(path, index=False)
        ds = ingest_csv(path, "short",
                        {"obs": "hh", "group": "grp",
                         "counts": {"a": "n_a", "b": "n_b"},
                         "covariates": {"price": {"a": "price_a", "b": "price_b"},
                                        "income": "income"}})
        assert ds.counts.tolist() == [[2, 1], [0, 4]]
        assert ds.covariate("price")[1].tolist() == [1.1, 1.9]

    def test_unknown_format(self, tmp_path, choice_dataset):
        path = self._long_csv(tmp_path, choice_dataset)
        with pytest.raises(SchemaError, match="unknown format"):
            ingest_csv(path, "wide", {})

    def test_missing_column(self, tmp_path, choice_dataset):
        path = self._long_csv(tmp_path, choice_dataset)
        with pytest.raises(SchemaError):
            ingest_csv(path, "long",
                       {"obs": "obs", "category": "category", "count": "missing"})
