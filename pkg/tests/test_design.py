"""Design construction: intercepts, slope modes, encodings, pooling."""

import numpy as np
import pytest

from poismult.data import Dataset, LongRecord
from poismult.design import (CovariateTerm, ModelSpec, build_design,
                             unique_covariate_groups)
from poismult.exceptions import ModelSpecError, PredictionError

from conftest import long_records


def small_ds():
    rows = []
    for j, (x, w) in enumerate([(0.5, "lo"), (1.5, "hi"), (-0.4, "lo"),
                                (0.9, "hi")]):
        for q, cat in enumerate(["a", "b", "c"]):
            rows.append((f"o{j}", cat, j + q,
                         {"x": x + 0.1 * q, "z": x, "w": w}, None))
    return Dataset(long_records(rows), ["a", "b", "c"])


class TestStructuralBlock:
    def test_intercept_only(self):
        ds = small_ds()
        X = build_design(ds, ModelSpec(terms=()))
        assert X.structural.shape == (12, 2)
        assert X.structural_names == ("Cb", "Cc")
        # baseline rows carry no structural load
        base_rows = X.row_category == 0
        assert np.all(X.structural[base_rows] == 0.0)

    def test_generic_term_single_column(self):
        ds = small_ds()
        X = build_design(ds, ModelSpec(terms=(CovariateTerm(("x",), "generic"),)))
        assert X.structural.shape[1] == 2 + 1
        assert "x" in X.structural_names
        col = X.structural[:, X.structural_names.index("x")]
        np.testing.assert_array_equal(col, ds.covariate("x").ravel())

    def test_category_specific_term_expands(self):
        ds = small_ds()
        X = build_design(
            ds, ModelSpec(terms=(CovariateTerm(("z",), "category_specific"),)))
        assert X.structural.shape[1] == 2 + 2
        names = X.structural_names
        assert "z:Cb" in names and "z:Cc" in names
        zb = X.structural[:, names.index("z:Cb")]
        assert np.all(zb[X.row_category != 1] == 0.0)
        np.testing.assert_array_equal(zb[X.row_category == 1],
                                      ds.covariate("z")[:, 1])

    def test_categorical_encoding_drops_first_observed_level(self):
        ds = small_ds()
        X = build_design(
            ds, ModelSpec(terms=(CovariateTerm(("w",), "category_specific"),)))
        assert X.encodings["w"] == ("lo", "hi")
        # one indicator column (for "hi") per non-baseline category
        assert sum(n.startswith("whi:") for n in X.structural_names) == 2
        assert not any(n.startswith("wlo:") for n in X.structural_names)

    def test_interaction_term(self):
        ds = small_ds()
        X = build_design(
            ds, ModelSpec(terms=(CovariateTerm(("x", "w"), "category_specific"),)))
        inter = [n for n in X.structural_names if "x" in n and "w" in n]
        assert inter, X.structural_names

    def test_generic_constant_within_observation_is_aliased(self):
        ds = small_ds()
        # z is shared across categories, so a generic slope on it cannot
        # be separated from the per-observation constants
        with pytest.raises(ModelSpecError,
                           match="constant within every observation"):
            build_design(ds, ModelSpec(terms=(CovariateTerm(("z",), "generic"),)))

    def test_unknown_covariate(self):
        ds = small_ds()
        with pytest.raises(ModelSpecError, match="not in dataset"):
            build_design(ds, ModelSpec(terms=(CovariateTerm(("nope",), "generic"),)))

    def test_baseline_override(self):
        ds = small_ds()
        X = build_design(ds, ModelSpec(terms=(), baseline="b"))
        assert X.baseline == "b"
        assert X.structural_names == ("Ca", "Cc")


class TestNuisanceBlock:
    def test_one_indicator_per_observation(self):
        ds = small_ds()
        X = build_design(ds, ModelSpec(terms=()))
        assert X.n_nuisance == 4
        assert X.nuisance_index.shape == (12,)
        # rows are observation-major with categories inside
        np.testing.assert_array_equal(X.nuisance_index,
                                      np.repeat(np.arange(4), 3))

    def test_full_matrix_layout(self):
        ds = small_ds()
        X = build_design(ds, ModelSpec(terms=()))
        M = X.full_matrix()
        assert M.shape == (12, 4 + 2)
        np.testing.assert_array_equal(M[:, :4].sum(axis=1), np.ones(12))
        np.testing.assert_array_equal(M[:, 4:], X.structural)

    def test_group_of_nuisance(self, choice_dataset):
        X = build_design(choice_dataset, ModelSpec(terms=()))
        assert X.group_of_nuisance is not None
        assert X.group_of_nuisance.tolist() == [0, 0, 0, 1, 1, 1]


class TestPooledMode:
    def make_pooled_pair(self):
        rows = []
        rng = np.random.default_rng(3)
        for j in range(30):
            w = ["u", "v", "t"][j % 3]
            counts = rng.multinomial(6, [0.4, 0.3, 0.3])
            for q, cat in enumerate(["a", "b", "c"]):
                rows.append((f"o{j}", cat, int(counts[q]), {"w": w}, None))
        ds = Dataset(long_records(rows), ["a", "b", "c"])
        terms = (CovariateTerm(("w",), "category_specific"),)
        per_obs = ModelSpec(terms=terms, sum_constants_mode="per_observation")
        pooled = ModelSpec(terms=terms, sum_constants_mode="pooled_categorical")
        return ds, per_obs, pooled

    def test_pooling_collapses_rows_and_sums_counts(self):
        ds, per_obs, pooled = self.make_pooled_pair()
        Xo = build_design(ds, per_obs)
        Xp = build_design(ds, pooled)
        assert Xp.n_rows < Xo.n_rows
        assert Xp.n_nuisance == 3
        assert Xp.y.sum() == Xo.y.sum()

    def test_unique_covariate_groups(self):
        ds, per_obs, pooled = self.make_pooled_pair()
        blocks = unique_covariate_groups(ds, pooled)
        assert len(blocks) == 3
        assert sum(len(b) for b in blocks) == ds.n_obs

    def test_pooled_rejects_continuous(self):
        ds = small_ds()
        spec = ModelSpec(terms=(CovariateTerm(("x",), "category_specific"),),
                         sum_constants_mode="pooled_categorical")
        with pytest.raises(ModelSpecError, match="continuous|categorical"):
            build_design(ds, spec)


class TestStructuralRowsFor:
    def test_profile_rows_match_training_columns(self):
        ds = small_ds()
        spec = ModelSpec(terms=(CovariateTerm(("x",), "generic"),
                                CovariateTerm(("w",), "category_specific")))
        X = build_design(ds, spec)
        rows = X.structural_rows_for({"x": 1.0, "w": "hi"})
        assert rows.shape == (3, X.p_structural)
        # category-bound columns vanish on the baseline row; the generic
        # column carries the profile value everywhere
        bi = X.category_labels.index(X.baseline)
        xcol = X.structural_names.index("x")
        bound = [k for k in range(X.p_structural) if k != xcol]
        assert np.all(rows[bi, bound] == 0.0)
        np.testing.assert_array_equal(rows[:, xcol], np.ones(3))

    def test_unseen_level_raises(self):
        ds = small_ds()
        spec = ModelSpec(terms=(CovariateTerm(("w",), "category_specific"),))
        X = build_design(ds, spec)
        with pytest.raises(PredictionError, match="unseen level"):
            X.structural_rows_for({"w": "brand-new"})


class TestModelSpecSerialization:
    def test_round_trip(self):
        spec = ModelSpec(terms=(CovariateTerm(("x",), "generic"),
                                CovariateTerm(("z", "w"), "category_specific")),
                         baseline="b", random_effects="gamma_per_category",
                         sum_constants_mode="per_observation")
        again = ModelSpec.from_dict(spec.to_dict())
        assert again == spec

    def test_malformed_mapping(self):
        with pytest.raises(ModelSpecError, match="malformed"):
            ModelSpec.from_dict({"terms": "oops"})

    def test_validation(self):
        with pytest.raises(ModelSpecError):
            ModelSpec(terms=(), random_effects="mystery")
        with pytest.raises(ModelSpecError):
            ModelSpec(terms=(CovariateTerm(("x",), "sideways"),))
