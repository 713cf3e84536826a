import numpy as np
import pytest

from algorithms.hp_space import ALGORITHMS, default_config, hp_space
from algorithms.trainers import forest_votes, predict, train
from core.errors import TrainingError
from utils.datasets import SynthSpec, synth_generate

from conftest import make_dataset


def config_for(algorithm, **overrides):
    space = hp_space(algorithm)
    return space.from_mapping({**space.as_mapping(default_config(space)), **overrides})


def noisy_dataset(n=100, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] + 0.8 * rng.normal(size=n) > 0).astype(int)
    return make_dataset(X, y, rng.integers(0, 2, size=n))


############### decision tree ###############

def test_depth_one_tree_separates_one_feature():
    ds = make_dataset(np.arange(20.0), [0] * 10 + [1] * 10, [0, 1] * 10)
    model = train("decision_tree", config_for("decision_tree", max_depth=1.0), ds, seed=0)
    assert (predict(model, ds.rows) == ds.labels).all()


def test_unbounded_tree_memorizes_training_labels():
    ds = noisy_dataset()
    model = train("decision_tree", config_for("decision_tree"), ds, seed=0)
    np.testing.assert_array_equal(predict(model, ds.rows), ds.labels)


def test_tree_constraints_on_fuzzed_configs():
    ds = synth_generate(SynthSpec(n_rows=200, seed=11))
    space = hp_space("decision_tree")
    rng = np.random.default_rng(1)
    for _ in range(100):
        config = space.sample(rng)
        hp = space.as_mapping(config)
        tree = train("decision_tree", config, ds, seed=int(rng.integers(1000))).params["tree"]
        assert tree.max_depth <= hp["max_depth"]
        assert tree.leaf_sizes.min() >= hp["min_samples_leaf"]


@pytest.mark.slow
def test_tree_constraints_on_1000_fuzzed_configs():
    ds = synth_generate(SynthSpec(n_rows=200, seed=11))
    space = hp_space("decision_tree")
    rng = np.random.default_rng(2)
    for _ in range(1000):
        config = space.sample(rng)
        hp = space.as_mapping(config)
        tree = train("decision_tree", config, ds, seed=int(rng.integers(1000))).params["tree"]
        assert tree.max_depth <= hp["max_depth"]
        assert tree.leaf_sizes.min() >= hp["min_samples_leaf"]


############### random forest ###############

def test_single_tree_forest_matches_decision_tree():
    ds = noisy_dataset(n=50, d=6, seed=3)
    shared = {"max_depth": 5.0, "min_samples_split": 4.0, "min_samples_leaf": 2.0,
              "criterion": "entropy", "max_features": "sqrt"}
    dt = train("decision_tree", config_for("decision_tree", splitter="best", **shared), ds, seed=42)
    rf = train("random_forest", config_for("random_forest", n_estimators=1.0, max_samples=1.0,
                                           **shared), ds, seed=42)
    points = np.random.default_rng(9).normal(size=(200, 6))
    np.testing.assert_array_equal(predict(dt, points), predict(rf, points))


def test_forest_prediction_is_the_majority_vote():
    ds = noisy_dataset(n=120, d=4, seed=5)
    rf = train("random_forest", config_for("random_forest", n_estimators=7.0, max_samples=0.6),
               ds, seed=1)
    points = np.random.default_rng(0).normal(size=(100, 4))
    votes = forest_votes(rf, points)
    assert votes.shape == (7, 100)
    np.testing.assert_array_equal(predict(rf, points), (votes.mean(axis=0) >= 0.5).astype(np.int8))


def test_forest_oob_score_is_recorded():
    ds = noisy_dataset(n=120, d=4, seed=5)
    rf = train("random_forest", config_for("random_forest", max_samples=0.5, oob_score="true"),
               ds, seed=1)
    assert 0.0 <= rf.metadata["oob_score"] <= 1.0


############### linear models ###############

def test_strongly_regularized_logistic_regression_predicts_majority_class():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(100, 3))
    y = np.r_[np.ones(60), np.zeros(40)].astype(int)
    ds = make_dataset(X, y, rng.integers(0, 2, size=100))
    model = train("logistic_regression",
                  config_for("logistic_regression", C=1e-4, max_iteration=1000.0), ds, seed=0)
    assert (predict(model, X) == 1).all()


def test_logistic_regression_learns_a_linear_rule():
    ds = noisy_dataset(n=300, seed=6)
    model = train("logistic_regression", config_for("logistic_regression"), ds, seed=0)
    assert model.iterations <= 100
    assert np.mean(predict(model, ds.rows) == ds.labels) > 0.7


def test_logistic_regression_iteration_cap():
    ds = noisy_dataset(n=300, seed=6)
    model = train("logistic_regression",
                  config_for("logistic_regression", max_iteration=10.0, tol=1e-6), ds, seed=0)
    assert model.iterations <= 10


@pytest.mark.parametrize("loss", ["hinge", "squared_hinge"])
@pytest.mark.parametrize("penalty", ["l1", "l2"])
def test_svm_separates_linear_data(loss, penalty):
    ds = noisy_dataset(n=300, seed=8)
    model = train("svm", config_for("svm", loss=loss, penalty=penalty), ds, seed=0)
    assert np.mean(predict(model, ds.rows) == ds.labels) > 0.7


@pytest.mark.parametrize("variant", [
    {"linear(0)_quadratic(1)": "linear", "Shrinkage_Linear": "none"},
    {"linear(0)_quadratic(1)": "linear", "Shrinkage_Linear": "auto"},
    {"linear(0)_quadratic(1)": "quadratic", "reg_param": 0.3},
])
def test_discriminant_analysis_variants(variant):
    ds = noisy_dataset(n=300, seed=10)
    model = train("discriminant_analysis", config_for("discriminant_analysis", **variant), ds, seed=0)
    assert np.mean(predict(model, ds.rows) == ds.labels) > 0.7


############### shared contract ###############

def test_single_class_data_is_a_training_error():
    ds = make_dataset(np.arange(10.0), [1] * 10, [0, 1] * 5)
    with pytest.raises(TrainingError):
        train("decision_tree", config_for("decision_tree"), ds, seed=0)


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_predict_contract(algorithm):
    ds = noisy_dataset(n=80, seed=12)
    model = train(algorithm, default_config(hp_space(algorithm)), ds, seed=3)
    assert predict(model, np.zeros((0, 3))).shape == (0,)
    with pytest.raises(ValueError):
        predict(model, np.zeros((4, 2)))
    row = ds.rows[:1]
    out = predict(model, np.vstack([row, row]))
    assert out[0] == out[1]
    assert set(np.unique(predict(model, ds.rows))) <= {0, 1}


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_training_is_deterministic(algorithm, small_dataset):
    space = hp_space(algorithm)
    config = space.sample(np.random.default_rng(5))
    points = np.random.default_rng(6).normal(size=(50, small_dataset.n_features))
    a = train(algorithm, config, small_dataset, seed=21)
    b = train(algorithm, config, small_dataset, seed=21)
    np.testing.assert_array_equal(predict(a, points), predict(b, points))


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_uniform_configs_train_without_crashing(algorithm, small_dataset):
    space = hp_space(algorithm)
    rng = np.random.default_rng(13)
    for _ in range(25):
        model = train(algorithm, space.sample(rng), small_dataset, seed=int(rng.integers(1000)))
        assert predict(model, small_dataset.rows).shape == (len(small_dataset),)


@pytest.mark.slow
@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_200_uniform_configs_train_without_crashing(algorithm, small_dataset):
    space = hp_space(algorithm)
    rng = np.random.default_rng(14)
    for _ in range(200):
        model = train(algorithm, space.sample(rng), small_dataset, seed=int(rng.integers(1000)))
        assert predict(model, small_dataset.rows).shape == (len(small_dataset),)
