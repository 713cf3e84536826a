import math

import numpy as np
import pytest

from algorithms import surrogates
from algorithms.cart import TreeParams, build_tree
from algorithms.hp_space import default_config, hp_space
from algorithms.surrogates import (KINDS, MeanRegressor, MLPRegressor, Surrogate, encode, fit,
                                   predict, predict_raw, resolve_options)
from core.errors import InvalidConfigError, SurrogateError
from Utils import derive_seed

from conftest import FAST_OPTIONS


def regression_data(n=60, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, d))
    y = 0.5 + 0.3 * np.sin(2 * X[:, 0]) * (X[:, 1] > 0)
    return X, y


############### encode ###############

def test_encode_components():
    dt = hp_space("decision_tree")
    mapping = {**dt.as_mapping(default_config(dt)), "max_depth": 5.0, "max_features": "log2"}
    vec = encode(dt.from_mapping(mapping), dt)
    assert vec[dt.index("max_depth")] == 5.0
    assert vec[dt.index("max_features")] == 2.0

    lr = hp_space("logistic_regression")
    mapping = {**lr.as_mapping(default_config(lr)), "C": 100.0}
    assert encode(lr.from_mapping(mapping), lr)[lr.index("C")] == pytest.approx(4.6052, abs=1e-4)


def test_encode_rejects_a_config_from_another_space():
    with pytest.raises(InvalidConfigError):
        encode(default_config(hp_space("svm")), hp_space("decision_tree"))


############### baseline ###############

def test_baseline_stores_the_mean():
    s = fit("baseline", np.zeros((2, 3)), [0.2, 0.4], seed=0, space_tag="t@1")
    assert s.model.mean == pytest.approx(0.3)
    np.testing.assert_allclose(predict(s, np.random.default_rng(0).normal(size=(5, 3))), 0.3)


def test_baseline_beats_every_other_constant():
    X, y = regression_data()
    s = fit("baseline", X, y, seed=0, space_tag="t@1")
    own = np.mean((predict_raw(s, X) - y) ** 2)
    for c in np.linspace(0.0, 1.0, 101):
        assert own <= np.mean((c - y) ** 2) + 1e-15


############### forest ###############

def test_single_unbootstrapped_tree_memorizes():
    X, y = regression_data(n=10, seed=1)
    options = {"n_estimators": 1, "bootstrap": False, "max_depth": 1000}
    s = fit("forest", X, y, seed=0, space_tag="t@1", options=options)
    np.testing.assert_array_equal(predict_raw(s, X), y)


def test_forest_is_the_mean_of_its_trees():
    X, y = regression_data(seed=2)
    s = fit("forest", X, y, seed=3, space_tag="t@1", options={"n_estimators": 10})
    points = np.random.default_rng(4).uniform(-1, 1, size=(30, 3))
    per_tree = s.model.tree_predictions(points)
    assert per_tree.shape == (10, 30)
    np.testing.assert_array_equal(predict_raw(s, points), per_tree.mean(axis=0))


############### gbt ###############

def test_single_round_boosting_equals_a_residual_tree():
    X, y = regression_data(n=20, seed=5)
    s = fit("gbt", X, y, seed=0, space_tag="t@1",
            options={"n_rounds": 1, "learning_rate": 1.0, "max_depth": 30})
    tree = build_tree(X, y - y.mean(), TreeParams(max_depth=30, criterion="mse"),
                      np.random.default_rng(derive_seed(0, "round", 0)))
    assert np.max(np.abs(predict_raw(s, X) - (tree.predict_value(X) + y.mean()))) <= 1e-9


def test_boosting_training_loss_never_increases():
    X, y = regression_data(n=80, seed=6)
    s = fit("gbt", X, y, seed=0, space_tag="t@1",
            options={"n_rounds": 40, "max_depth": 3, "learning_rate": 0.3})
    losses = s.model.train_loss_
    assert len(losses) == 40
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


############### mlp ###############

def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(5, 6))
    y = rng.uniform(size=5)
    net = MLPRegressor()
    net.init_params(6, hidden_layers=4, width=32, rng=rng)
    _, grads_w, grads_b = net.loss_and_grads(X, y)

    h = 1e-5
    worst = 0.0
    for params, grads in ((net.weights, grads_w), (net.biases, grads_b)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                saved = p[idx]
                p[idx] = saved + h
                up = net.loss_and_grads(X, y)[0]
                p[idx] = saved - h
                down = net.loss_and_grads(X, y)[0]
                p[idx] = saved
                numeric = (up - down) / (2 * h)
                worst = max(worst, abs(numeric - g[idx]) / max(abs(numeric) + abs(g[idx]), 1e-6))
    assert worst <= 1e-4


def test_mlp_learns_a_smooth_target():
    X, y = regression_data(n=200, seed=8)
    s = fit("mlp", X, y, seed=0, space_tag="t@1", options={"epochs": 30})
    losses = s.model.loss_curve
    assert len(losses) == 30
    assert losses[-1] < losses[0]


def test_mlp_divergence_names_the_epoch():
    X, y = regression_data(n=40, seed=9)
    with np.errstate(all="ignore"):
        with pytest.raises(SurrogateError, match="epoch"):
            fit("mlp", X, y, seed=0, space_tag="t@1", options={"learning_rate": 1e200, "batch_size": 8})


############### svr ###############

def test_svr_meets_kkt_tolerance_or_flags_the_cap():
    X, y = regression_data(n=60, seed=10)
    s = fit("svr", X, y, seed=0, space_tag="t@1")
    m = s.model
    assert m.hit_cap or m.kkt_gap < s.options["tol"]
    assert m.gamma == pytest.approx(1.0 / 3.0)


def test_svr_fits_a_smooth_target():
    X, y = regression_data(n=100, seed=11)
    s = fit("svr", X, y, seed=0, space_tag="t@1")
    assert np.sqrt(np.mean((predict_raw(s, X) - y) ** 2)) < np.std(y)


def test_svr_iteration_cap_sets_the_flag():
    X, y = regression_data(n=60, seed=10)
    s = fit("svr", X, y, seed=0, space_tag="t@1", options={"max_iter": 2, "tol": 1e-12})
    assert s.model.hit_cap
    assert s.model.iterations == 2


############### shared contract ###############

def test_predictions_are_clamped():
    s = Surrogate(kind="baseline", space_tag="t@1", model=MeanRegressor(1.3))
    assert predict(s, np.zeros((3, 2))).tolist() == [1.0, 1.0, 1.0]
    assert surrogates.clamp([1.3, -0.2, 0.5]).tolist() == [1.0, 0.0, 0.5]


def test_space_tag_mismatch():
    s = fit("baseline", np.zeros((2, 3)), [0.2, 0.4], seed=0, space_tag="svm@1")
    with pytest.raises(SurrogateError):
        predict(s, np.zeros((1, 3)), space_tag="svm@2")


def test_empty_training_set():
    with pytest.raises(SurrogateError):
        fit("forest", np.zeros((0, 3)), [], seed=0, space_tag="t@1")


def test_unknown_kind_and_option():
    with pytest.raises(ValueError):
        resolve_options("knn")
    with pytest.raises(ValueError, match="n_trees"):
        resolve_options("forest", {"n_trees": 3})


@pytest.mark.parametrize("kind", KINDS)
def test_fitting_is_deterministic(kind):
    X, y = regression_data(n=50, seed=12)
    points = np.random.default_rng(13).uniform(-1, 1, size=(20, 3))
    options = FAST_OPTIONS.get(kind)
    a = fit(kind, X, y, seed=4, space_tag="t@1", options=options)
    b = fit(kind, X, y, seed=4, space_tag="t@1", options=options)
    np.testing.assert_array_equal(predict(a, points), predict(b, points))
    assert ((predict(a, points) >= 0) & (predict(a, points) <= 1)).all()


def test_saved_surrogates_predict_identically(tmp_path):
    X, y = regression_data(n=50, seed=14)
    points = np.random.default_rng(15).uniform(-1, 1, size=(20, 3))
    for kind in ("mlp", "svr", "gbt"):
        s = fit(kind, X, y, seed=1, space_tag="t@1", options=FAST_OPTIONS[kind])
        surrogates.save(s, tmp_path / f"{kind}.json")
        back = surrogates.load(tmp_path / f"{kind}.json")
        assert (back.kind, back.space_tag, back.seed) == (kind, "t@1", 1)
        np.testing.assert_allclose(predict_raw(back, points), predict_raw(s, points), rtol=0, atol=1e-12)


def test_fit_configs_uses_the_space_tag():
    space = hp_space("discriminant_analysis")
    rng = np.random.default_rng(0)
    configs = [space.sample(rng) for _ in range(12)]
    s = surrogates.fit_configs("baseline", configs, np.linspace(0, 1, 12), space, seed=0)
    assert s.space_tag == "discriminant_analysis@1"
    np.testing.assert_allclose(surrogates.predict_configs(s, configs[:3], space), 0.5)
    assert math.isclose(s.model.mean, 0.5)
