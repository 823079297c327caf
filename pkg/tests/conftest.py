"""Shared fixtures: small hand-built datasets plus seeded simulators."""

from __future__ import annotations

import numpy as np
import pytest

from poismult.data import Dataset, LongRecord
from poismult.design import CovariateTerm, ModelSpec
from poismult.gamma_poisson import GammaPoissonParams
from poismult.oracle import simulate


def long_records(rows):
    """Build LongRecords from (obs, category, count, covariates, group) tuples."""
    out = []
    for obs, cat, count, cov, group in rows:
        out.append(LongRecord(obs_id=obs, category=cat, count=count,
                              covariates=cov, group_id=group))
    return out


@pytest.fixture
def choice_dataset() -> Dataset:
    """Six observations, three categories, one numeric and one categorical
    covariate, two groups.  Small enough to check by hand."""
    rows = []
    rng = np.random.default_rng(5)
    prices = {"a": 1.0, "b": 1.4, "c": 0.8}
    for j in range(6):
        group = "g1" if j < 3 else "g2"
        region = "north" if j % 2 == 0 else "south"
        counts = rng.multinomial(12, [0.5, 0.3, 0.2])
        for q, cat in enumerate(["a", "b", "c"]):
            rows.append((f"o{j}", cat, int(counts[q]),
                         {"price": prices[cat] + 0.1 * j, "region": region},
                         group))
    return Dataset(long_records(rows), ["a", "b", "c"])


@pytest.fixture
def independent_dataset() -> Dataset:
    """Like choice_dataset but without a group column."""
    rows = []
    rng = np.random.default_rng(6)
    for j in range(8):
        counts = rng.multinomial(10, [0.4, 0.35, 0.25])
        x = float(rng.normal())
        for q, cat in enumerate(["a", "b", "c"]):
            rows.append((f"o{j}", cat, int(counts[q]),
                         {"x": x + 0.2 * q}, None))
    return Dataset(long_records(rows), ["a", "b", "c"])


def simulate_grouped(I=6, J=3, seed=0, gamma=(0.5, -0.3, 0.8),
                     beta=(0.8, 1.5), log_delta=0.0):
    """Draw a grouped dataset with one generic covariate, Q = 3."""
    spec = ModelSpec(terms=(CovariateTerm(("x",), "generic"),),
                     random_effects="gamma_per_category")
    theta = GammaPoissonParams(
        gamma=np.asarray(gamma, dtype=np.float64),
        beta=np.asarray(beta, dtype=np.float64),
        log_delta=np.full(I * J, float(log_delta)),
        spec=spec)
    ds = simulate(spec, theta, I, J, seed=seed)
    return ds, spec, theta


@pytest.fixture
def grouped_sim():
    """Factory fixture: seeded grouped simulation with one generic covariate."""
    return simulate_grouped


def random_fixed_instance(seed: int):
    """Independent-data instance with mixed covariates for exactness checks.

    Draws Q in {2,3,4} and n in [30, 100]; the response is generated from
    the surrogate with a vanishing variance component so the data follow
    the fixed-effects multinomial model to floating-point accuracy.
    Returns (dataset, fixed-effects spec).
    """
    from dataclasses import replace

    rng = np.random.default_rng(seed)
    Q = int(rng.choice([2, 3, 4]))
    n = int(rng.integers(30, 101))
    terms = [CovariateTerm(("x",), "generic"),
             CovariateTerm(("z",), "category_specific")]
    kinds = {"x": "numeric", "z": "numeric_obs"}
    if rng.random() < 0.5:
        terms.append(CovariateTerm(("w",), "category_specific"))
        kinds["w"] = ("categorical", ["a", "b"])
    spec = ModelSpec(terms=tuple(terms), random_effects="gamma_per_category")
    p = (Q - 1) + 1 + (Q - 1) + (len(terms) == 3) * (Q - 1)
    theta = GammaPoissonParams(
        gamma=rng.normal(0, 0.4, p),
        beta=np.full(Q - 1, 1e-12),
        log_delta=np.full(n, np.log(8.0)),
        spec=spec)
    ds = simulate(spec, theta, n, 1, seed=seed, covariate_kinds=kinds)
    return ds, replace(spec, random_effects="none")


@pytest.fixture
def fixed_instance():
    """Factory fixture: seeded independent-data instance with mixed covariates."""
    return random_fixed_instance
