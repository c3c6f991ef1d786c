import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alchemloop.errors import NonpositiveStd
from alchemloop.molgraph import parse_smiles
from alchemloop.scoring import (
    PropertyStats,
    batch_full_objective,
    constraint_indicator,
    full_objective,
    multi_property_score,
    objective_from_predictions,
    oracle_score,
    sigmoid,
    zscore,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


class Constant:
    """Stand-in surrogate returning a fixed value for every row."""

    def __init__(self, value):
        self.value = value

    def predict(self, X):
        return np.full(len(X), float(self.value))


STATS = PropertyStats(1.5, 0.2, 50.0, 40.0)


@pytest.fixture(scope="module")
def feature_stats():
    from alchemloop.molgraph import FeatureStats

    return FeatureStats.from_molecules([parse_smiles(s) for s in ["CC", "CCO", "NCC=O", "C1CC1N"]])


def test_zscore_examples():
    assert zscore(3.0, 3.0, 2.0) == 0
    assert zscore(1.0 + 1.2 * 0.5, 1.0, 0.5) == pytest.approx(1.2)
    with pytest.raises(NonpositiveStd):
        zscore(1.0, 1.0, 0.0)
    with pytest.raises(NonpositiveStd):
        PropertyStats(1.0, 0.0, 1.0, 1.0)


def test_multi_property_score_examples():
    assert multi_property_score(1.5, 1.2) == pytest.approx(2.7)
    assert multi_property_score(0, 0) == 0
    assert multi_property_score(-1, 1) == 0


def test_oracle_score_is_sum_of_z():
    rho, hof = STATS.mean_rho + 1.2 * STATS.std_rho, STATS.mean_hof + 1.5 * STATS.std_hof
    assert oracle_score(rho, hof, STATS) == pytest.approx(2.7)


def test_property_stats_round_trip():
    assert PropertyStats.from_dict(STATS.to_dict()) == STATS
    s = PropertyStats.from_values([1, 2, 3], [10, 20, 30])
    assert s.mean_rho == 2 and s.std_rho == pytest.approx(np.std([1, 2, 3]))


def test_constraint_indicator():
    assert constraint_indicator(parse_smiles("CCO")) == 1
    assert constraint_indicator(parse_smiles("C[O-]")) == 0
    assert constraint_indicator(parse_smiles("C[N+](=O)[O-]")) == 1


def test_constraint_indicator_with_stability_model(feature_stats):
    m = parse_smiles("CCO")
    assert constraint_indicator(m, Constant(0.3), feature_stats) == 0
    assert constraint_indicator(m, Constant(0.5), feature_stats) == 1
    assert constraint_indicator(m, Constant(0.7), feature_stats, threshold=0.8) == 0


def test_full_objective_examples(feature_stats):
    m = parse_smiles("CCO")
    at_mean = (Constant(STATS.mean_rho), Constant(STATS.mean_hof))
    assert full_objective(m, at_mean, STATS, feature_stats) == 1.0
    charged = parse_smiles("C[O-]")
    high = (Constant(STATS.mean_rho + 10), Constant(STATS.mean_hof + 1000))
    assert full_objective(charged, high, STATS, feature_stats) == 0.0
    assert full_objective(m, high, STATS, feature_stats, stability_model=Constant(0.1)) == 0.0
    saturated = (Constant(STATS.mean_rho + 50 * STATS.std_rho), Constant(STATS.mean_hof + 50 * STATS.std_hof))
    assert full_objective(m, saturated, STATS, feature_stats) == pytest.approx(2.0, abs=1e-12)


def test_batch_objective_matches_single(feature_stats):
    mols = [parse_smiles(s) for s in ["CCO", "C[O-]", "NC=O", "CCCN"]]
    models = (Constant(1.9), Constant(10.0))
    batch = batch_full_objective(mols, models, STATS, feature_stats)
    single = [full_objective(m, models, STATS, feature_stats) for m in mols]
    assert batch.tolist() == single
    assert batch_full_objective([], models, STATS, feature_stats).shape == (0,)


def test_sigmoid_matches_logistic():
    for z in np.linspace(-30, 30, 121):
        assert sigmoid(float(z)) == pytest.approx(1 / (1 + math.exp(-z)), rel=1e-12, abs=1e-300)
    arr = np.linspace(-5, 5, 11)
    assert np.allclose(sigmoid(arr), 1 / (1 + np.exp(-arr)))


@given(finite, finite, finite)
def test_objective_is_increasing_in_each_property(rho, hof, delta):
    delta = abs(delta) + 1e-3
    base = objective_from_predictions(rho, hof, STATS)
    assert 0.0 <= base <= 2.0
    # strictly increasing wherever the sigmoid is not saturated in double precision
    up_rho = objective_from_predictions(rho + delta, hof, STATS)
    up_hof = objective_from_predictions(rho, hof + delta, STATS)
    assert up_rho >= base and up_hof >= base
    if abs(STATS.z_rho(rho)) < 20 and abs(STATS.z_rho(rho + delta)) < 20:
        assert up_rho > base
    if abs(STATS.z_hof(hof)) < 20 and abs(STATS.z_hof(hof + delta)) < 20:
        assert up_hof > base


@given(finite, finite, st.floats(0.5, 4.0), st.floats(0.5, 4.0))
def test_z_preserving_rescaling_leaves_scores_unchanged(rho, hof, a, b):
    # z = (v - m) / s is unchanged when v, m and s are all scaled by the same power of two
    a, b = 2.0 ** round(math.log2(a)), 2.0 ** round(math.log2(b))
    scaled = PropertyStats(STATS.mean_rho * a, STATS.std_rho * a, STATS.mean_hof * b, STATS.std_hof * b)
    assert oracle_score(rho * a, hof * b, scaled) == oracle_score(rho, hof, STATS)
    assert objective_from_predictions(rho * a, hof * b, scaled) == objective_from_predictions(rho, hof, STATS)
