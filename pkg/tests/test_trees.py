import numpy as np
import pytest

from plumeshine.datasets import Preprocessor, inverse_target
from plumeshine.trees import (
    BoostedHyper,
    BoostedModel,
    ForestHyper,
    ModelFormatError,
    TreeParams,
    fit_boosted,
    fit_forest,
    fit_tree,
    load_model,
    predict,
    predict_dose,
    save_model,
)


def make_pre(n_nuc=3):
    return Preprocessor(
        nuclide_codes={f"Zz-{100+i}": i for i in range(n_nuc)},
        stability_codes={c: i for i, c in enumerate("ABCDEF")},
        height_min=10.0, height_max=200.0, distance_min=25.0, distance_max=2000.0,
    )


@pytest.fixture(scope="module")
def noisy_quadratic():
    rng = np.random.default_rng(99)
    X = rng.uniform(-2, 2, size=(600, 4))
    y = X[:, 0] ** 2 + 0.5 * X[:, 1] - 0.2 * X[:, 2] * X[:, 3] + rng.normal(0, 0.1, 600)
    return X[:400], y[:400], X[400:], y[400:]


def test_constant_target_single_leaf():
    X = np.random.default_rng(0).uniform(size=(40, 3))
    tree = fit_tree(X, np.full(40, 7.25))
    assert tree.n_nodes() == 1
    assert tree.feature[0] == -1
    np.testing.assert_array_equal(tree.predict(X), np.full(40, 7.25))


def test_perfect_binary_split():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([2.0, 2.0, 8.0, 8.0])
    tree = fit_tree(X, y)
    assert tree.depth == 1
    assert tree.threshold[0] == 0.5  # midpoint of the two observed values
    np.testing.assert_array_equal(tree.predict(X), y)


def test_sine_sample_beats_variance():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 2 * np.pi, size=(50, 1))
    y = np.sin(X[:, 0])
    tree = fit_tree(X, y, TreeParams(max_depth=4))
    assert np.mean((tree.predict(X) - y) ** 2) < np.var(y)


def test_depth_cap_respected():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(300, 4))
    y = rng.normal(size=300)
    tree = fit_tree(X, y, TreeParams(max_depth=3))
    assert tree.depth <= 3


def test_thresholds_between_observed_values():
    rng = np.random.default_rng(8)
    X = rng.uniform(size=(150, 2))
    y = rng.normal(size=150)
    tree = fit_tree(X, y, TreeParams(max_depth=6))
    internal = tree.feature >= 0
    for f, thr in zip(tree.feature[internal], tree.threshold[internal]):
        col = np.sort(np.unique(X[:, f]))
        below = col[col < thr]
        above = col[col > thr]
        assert below.size and above.size
        assert thr not in col


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        fit_tree(np.empty((0, 2)), np.empty(0))


# --- forest ---

def test_single_tree_forest_equals_fit_tree(noisy_quadratic):
    X, y, Xt, _ = noisy_quadratic
    hyper = ForestHyper(n_estimators=1, bootstrap=False, max_depth=15)
    forest = fit_forest(X, y, make_pre(), hyper)
    tree = fit_tree(X, y, TreeParams(max_depth=15))
    np.testing.assert_array_equal(forest.predict_log(Xt), tree.predict(Xt))


def test_forest_seed_determinism(tmp_path, noisy_quadratic):
    X, y, _, _ = noisy_quadratic
    m1 = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=8, seed=3007))
    m2 = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=8, seed=3007))
    p1, p2 = tmp_path / "a.model.txt", tmp_path / "b.model.txt"
    save_model(m1, p1)
    save_model(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_forest_generalizes_better_than_deep_tree(noisy_quadratic):
    X, y, Xt, yt = noisy_quadratic
    forest = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=30, max_depth=15))
    deep = fit_tree(X, y, TreeParams(max_depth=15))
    forest_train_mse = np.mean((forest.predict_log(X) - y) ** 2)
    deep_test_mse = np.mean((deep.predict(Xt) - yt) ** 2)
    assert forest_train_mse <= deep_test_mse


def test_forest_prediction_order_invariance(noisy_quadratic):
    X, y, Xt, _ = noisy_quadratic
    forest = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=12))
    ref = forest.predict_log(Xt)
    forest.trees = forest.trees[::-1]
    np.testing.assert_allclose(forest.predict_log(Xt), ref, rtol=1e-12, atol=1e-15)


def test_forest_predictions_bounded_by_leaf_values(noisy_quadratic):
    X, y, Xt, _ = noisy_quadratic
    forest = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=10))
    lo = min(t.leaf_values().min() for t in forest.trees)
    hi = max(t.leaf_values().max() for t in forest.trees)
    preds = forest.predict_log(Xt)
    assert preds.min() >= lo and preds.max() <= hi


# --- boosted ---

def test_zero_learning_rate_predicts_base(noisy_quadratic):
    X, y, Xv, yv = noisy_quadratic
    model = fit_boosted(X, y, Xv, yv, make_pre(),
                        BoostedHyper(learning_rate=0.0, rounds=5, early_stopping_rounds=100))
    preds = model.predict_log(Xv)
    np.testing.assert_allclose(preds, np.mean(y), rtol=1e-14)


def test_full_sample_training_rmse_nonincreasing(noisy_quadratic):
    X, y, Xv, yv = noisy_quadratic
    hyper = BoostedHyper(subsample=1.0, rounds=25, max_depth=4, early_stopping_rounds=100)
    model = fit_boosted(X, y, X, y, make_pre(), hyper)  # val = train to read the trace
    trace = np.array(model.val_rmse_trace)
    assert np.all(np.diff(trace) <= 1e-12)


def test_early_stopping_keeps_best_prefix(noisy_quadratic):
    X, y, Xv, yv = noisy_quadratic
    model = fit_boosted(X, y, Xv, yv, make_pre(),
                        BoostedHyper(rounds=100, early_stopping_rounds=5, max_depth=2))
    trace = np.array(model.val_rmse_trace)
    assert model.best_round == int(np.argmin(trace))
    assert len(model.trees) == model.best_round + 1
    assert len(model.trees) <= 100


def test_boosted_seed_determinism(tmp_path, noisy_quadratic):
    X, y, Xv, yv = noisy_quadratic
    h = BoostedHyper(rounds=10, seed=3007)
    m1 = fit_boosted(X, y, Xv, yv, make_pre(), h)
    m2 = fit_boosted(X, y, Xv, yv, make_pre(), h)
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    save_model(m1, p1)
    save_model(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_validation_rejected(noisy_quadratic):
    X, y, _, _ = noisy_quadratic
    with pytest.raises(ValueError):
        fit_boosted(X, y, np.empty((0, 4)), np.empty(0), make_pre())


# --- prediction plumbing ---

def test_batch_equals_single_predictions(noisy_quadratic):
    X, y, Xt, _ = noisy_quadratic
    model = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=5))
    batch = model.predict_log(Xt[:10])
    singles = np.array([model.predict_log(Xt[i:i+1])[0] for i in range(10)])
    np.testing.assert_array_equal(batch, singles)


def test_predict_dose_is_inverse_of_log_prediction(noisy_quadratic):
    X, y, _, _ = noisy_quadratic
    pre = make_pre()
    model = fit_forest(X, y, pre, ForestHyper(n_estimators=3))
    doses = predict_dose(model, ["Zz-100"], ["B"], [50.0], [300.0])
    from plumeshine.datasets import transform_features

    row = transform_features(pre, "Zz-100", "B", 50.0, 300.0)
    p = predict(model, row)
    assert doses[0] == pytest.approx(10.0 ** p[0], rel=1e-14)


# --- serialization ---

def test_save_load_roundtrip_predictions(tmp_path, noisy_quadratic):
    X, y, Xv, yv = noisy_quadratic
    rng = np.random.default_rng(3)
    probe = rng.uniform(-2, 2, size=(100, 4))
    for model in (
        fit_forest(X, y, make_pre(), ForestHyper(n_estimators=3)),
        fit_boosted(X, y, Xv, yv, make_pre(), BoostedHyper(rounds=5)),
    ):
        path = tmp_path / f"{model.kind}.model.txt"
        save_model(model, path)
        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.predict_log(probe), model.predict_log(probe))


def test_corrupted_byte_fails_checksum(tmp_path, noisy_quadratic):
    X, y, _, _ = noisy_quadratic
    model = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=2))
    path = tmp_path / "m.txt"
    save_model(model, path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0x01
    path.write_bytes(raw)
    with pytest.raises(ModelFormatError, match="checksum"):
        load_model(path)


def test_version_mismatch_rejected(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("plumeshine-model v99\nsha256 00\npayload\n")
    with pytest.raises(ModelFormatError, match="unsupported"):
        load_model(path)


def test_saved_model_equals_retrained_model(tmp_path, noisy_quadratic):
    X, y, _, _ = noisy_quadratic
    rng = np.random.default_rng(4)
    probe = rng.uniform(-2, 2, size=(50, 4))
    m1 = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=4, seed=3007))
    path = tmp_path / "m.txt"
    save_model(m1, path)
    loaded = load_model(path)
    m2 = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=4, seed=3007))
    np.testing.assert_array_equal(loaded.predict_log(probe), m2.predict_log(probe))


def test_seed_changes_only_resampling(noisy_quadratic):
    # with bootstrap off and full subsampling there is no randomness left,
    # so two different seeds must produce identical models
    X, y, Xt, _ = noisy_quadratic
    a = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=3, bootstrap=False, seed=1))
    b = fit_forest(X, y, make_pre(), ForestHyper(n_estimators=3, bootstrap=False, seed=2))
    np.testing.assert_array_equal(a.predict_log(Xt), b.predict_log(Xt))
    ha = BoostedHyper(rounds=5, subsample=1.0, seed=1)
    hb = BoostedHyper(rounds=5, subsample=1.0, seed=2)
    Xv, yv = X[:50], y[:50]
    ma = fit_boosted(X, y, Xv, yv, make_pre(), ha)
    mb = fit_boosted(X, y, Xv, yv, make_pre(), hb)
    np.testing.assert_array_equal(ma.predict_log(Xt), mb.predict_log(Xt))
