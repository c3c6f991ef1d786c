import json

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from alchemloop.errors import DegenerateTargets, DimensionMismatch, EmptyTestSet, InsufficientData
from alchemloop.surrogate import (
    EvalReport,
    SurrogateModel,
    TrainConfig,
    evaluate,
    evaluate_regression,
    evaluate_top,
    fold_splits,
    forward,
    init_params,
    loss_and_grads,
    precision_recall,
    rmse,
    roc_auc,
    train,
)


@pytest.fixture(scope="module")
def linear_model():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(500, 32))
    y = 2 * X[:, 0] + 1
    return train(X, y, TrainConfig(seed=1)), X, y


def test_linear_target_is_learned(linear_model):
    model, _, _ = linear_model
    rng = np.random.default_rng(99)
    Xt = rng.uniform(-1, 1, size=(500, 32))
    yt = 2 * Xt[:, 0] + 1
    assert rmse(model.predict(Xt), yt) < 0.05 * yt.std()


def test_linear_target_probe(linear_model):
    model, _, _ = linear_model
    x = np.zeros(32)
    x[0] = 1.0
    assert abs(model.predict(x) - 3.0) < 0.15


def test_prediction_is_fold_mean(linear_model):
    model, X, _ = linear_model
    folds = model.fold_predictions(X[:20])
    assert folds.shape == (5, 20)
    assert np.allclose(model.predict(X[:20]), folds.mean(axis=0), atol=1e-12)
    pred = model.predict(X[:20])
    assert np.all(pred >= folds.min(axis=0) - 1e-12) and np.all(pred <= folds.max(axis=0) + 1e-12)


def test_dimension_mismatch(linear_model):
    model, _, _ = linear_model
    with pytest.raises(DimensionMismatch):
        model.predict(np.zeros(31))


def test_training_is_deterministic():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(80, 6))
    y = X[:, 1] - X[:, 2] ** 2
    cfg = TrainConfig(epochs=5, seed=3)
    a, b = train(X, y, cfg), train(X, y, cfg)
    probe = rng.normal(size=(10, 6))
    assert np.array_equal(a.predict(probe), b.predict(probe))


def test_constant_targets():
    X = np.random.default_rng(0).normal(size=(60, 3))
    with pytest.raises(DegenerateTargets):
        train(X, np.full(60, 2.0))


def test_insufficient_data():
    X = np.random.default_rng(0).normal(size=(49, 3))
    with pytest.raises(InsufficientData):
        train(X, X[:, 0])
    X = np.random.default_rng(0).normal(size=(60, 3))
    with pytest.raises(InsufficientData):
        train(X, np.ones(60), task="classification")


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(fractions=(0.5, 0.2, 0.2))
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


def test_fold_splits_partition_the_data():
    cfg = TrainConfig()
    splits = fold_splits(103, cfg, np.random.default_rng(0))
    assert len(splits) == 5
    for tr, va, te in splits:
        assert len(tr) == 82 and len(va) == 10
        assert sorted(np.concatenate([tr, va, te]).tolist()) == list(range(103))
    # every example is validated in some fold
    assert set(np.concatenate([va for _, va, _ in splits]).tolist()).issubset(range(103))
    assert len({tuple(va) for _, va, _ in splits}) == 5


@pytest.mark.parametrize("task", ["regression", "classification"])
def test_gradients_match_finite_differences(task):
    rng = np.random.default_rng(7)
    params = init_params(4, 5, rng)
    for p in params:
        p += rng.normal(scale=0.3, size=p.shape)
    X = rng.normal(size=(9, 4))
    y = (rng.random(9) > 0.5).astype(float) if task == "classification" else rng.normal(size=9)
    _, grads = loss_and_grads(params, X, y, task)
    h = 1e-6
    for p, g in zip(params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = loss_and_grads(params, X, y, task)
            p[idx] = old - h
            down, _ = loss_and_grads(params, X, y, task)
            p[idx] = old
            numeric = (up - down) / (2 * h)
            assert abs(numeric - g[idx]) <= 1e-4 * max(abs(numeric), abs(g[idx]), 1e-6)


def test_forward_shape():
    params = init_params(3, 4, np.random.default_rng(0))
    assert forward(params, np.zeros((7, 3))).shape == (7,)


def test_classifier_outputs_probabilities():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 5))
    y = (X[:, 0] + 0.3 * rng.normal(size=200) > 0).astype(float)
    model = train(X, y, TrainConfig(epochs=20), task="classification")
    p = model.predict(rng.normal(size=(100, 5)) * 10)
    assert np.all((p >= 0) & (p <= 1))
    rep = evaluate(model, X, y)
    assert rep.auc > 0.9


def test_checkpoint_round_trip(tmp_path, linear_model):
    model, X, _ = linear_model
    path = tmp_path / "m.json"
    model.save(path)
    back = SurrogateModel.load(path)
    assert np.array_equal(back.predict(X[:50]), model.predict(X[:50]))
    d = json.loads(path.read_text())
    assert d["version"] == "alchemloop-surrogate/1"
    d["version"] = "other"
    with pytest.raises(ValueError):
        SurrogateModel.from_dict(d)


# ---------------------------------------------------------------------------
# evaluation


def test_perfect_predictor():
    true = np.array([1.0, 2.0, 5.0, 9.0])
    rep = evaluate_regression(true, true, top_threshold=5.0)
    assert rep == EvalReport(4, 0.0, 1.0, 1.0)


def test_constant_predictor_misses_the_top():
    true_rho = np.array([1.0, 1.1, 3.0])
    true_hof = np.array([0.0, 5.0, 90.0])
    precision, recall = evaluate_top([1.2] * 3, [10.0] * 3, true_rho, true_hof, 2.0, 50.0)
    assert recall == 0.0 and precision == 0.0


def test_precision_recall_by_hand():
    assert precision_recall([1, 1, 0, 0], [1, 0, 1, 0]) == (0.5, 0.5)
    assert precision_recall([0, 0], [1, 0]) == (0.0, 0.0)


def test_empty_test_set():
    with pytest.raises(EmptyTestSet):
        rmse([], [])
    with pytest.raises(EmptyTestSet):
        evaluate_regression([], [])


def test_auc_matches_sklearn():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = int(rng.integers(2, 60))
        labels = rng.random(n) > 0.5
        if labels.all() or not labels.any():
            continue
        scores = np.round(rng.normal(size=n), 1)  # rounding forces ties
        assert roc_auc(scores, labels) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)


def test_random_scores_have_auc_one_half():
    rng = np.random.default_rng(8)
    labels = np.arange(1000) % 2 == 0
    assert abs(roc_auc(rng.random(1000), labels) - 0.5) < 0.05
