"""
The five classifiers whose hyperparameters form the surrogate input space.

train() dispatches on the algorithm name; every trainer receives the config
as a {dim name: value} mapping and returns learned parameters plus
(iterations, converged, extra metadata). Inert dimensions are accepted and
ignored.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from algorithms.cart import Tree, TreeParams, build_tree
from algorithms.hp_space import HPConfig, hp_space
from core.errors import TrainingError

logger = logging.getLogger(__name__)

SVM_MAX_ITER = 1000


@dataclass(frozen=True)
class TrainedModel:
    algorithm: str
    params: dict
    n_features: int
    seed: int
    iterations: int
    converged: bool
    metadata: dict = field(default_factory=dict)


def train(algorithm: str, config: HPConfig, data, seed: int) -> TrainedModel:
    """
    Inputs: algorithm name, a config valid for hp_space(algorithm), a
    TabularDataset with both label classes, and an integer seed.
    Returns: an immutable TrainedModel. Same inputs, same model.
    """
    space = hp_space(algorithm)
    space.validate(config)
    hp = space.as_mapping(config)
    X = np.asarray(data.rows, dtype=float)
    y = np.asarray(data.labels, dtype=float)
    if X.shape[0] == 0:
        raise TrainingError(f"{algorithm}: empty training set")
    if np.unique(y).size < 2:
        raise TrainingError(f"{algorithm}: training data holds a single label class")

    params, iterations, converged, extra = _TRAINERS[algorithm](X, y, hp, int(seed))
    if not converged:
        logger.debug("%s: stopped after %d iterations without converging", algorithm, iterations)
    return TrainedModel(algorithm=algorithm, params=params, n_features=X.shape[1],
                        seed=int(seed), iterations=int(iterations),
                        converged=bool(converged), metadata=extra)


def predict(model: TrainedModel, rows) -> np.ndarray:
    X = np.asarray(rows, dtype=float)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, model.n_features)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"expected a matrix with {model.n_features} columns, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros(0, dtype=np.int8)
    return _PREDICTORS[model.algorithm](model.params, X).astype(np.int8)


############### Shared helpers ###############

def _standardize(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd, mu, sd


def _design(Xs, fit_intercept: bool, intercept_scaling: float):
    if not fit_intercept:
        return Xs
    return np.column_stack([Xs, np.full(Xs.shape[0], intercept_scaling)])


def _linear_score(params: dict, X):
    Xs = (X - params["mu"]) / params["sd"]
    A = _design(Xs, params["fit_intercept"], params["intercept_scaling"])
    return A @ params["theta"]


def _prox(w, eta: float, l1: float, l2: float):
    """Proximal step for l1 * |w|_1 + l2 / 2 * |w|^2."""
    if l1 > 0:
        w = np.sign(w) * np.maximum(np.abs(w) - eta * l1, 0.0)
    return w / (1.0 + eta * l2)


def _lipschitz(A) -> float:
    return max(np.linalg.norm(A, 2) ** 2 / A.shape[0], 1e-8)


def _tree_params(hp: dict, splitter: str) -> TreeParams:
    return TreeParams(
        max_depth=int(hp["max_depth"]),
        min_samples_split=int(hp["min_samples_split"]),
        min_samples_leaf=int(hp["min_samples_leaf"]),
        min_weight_fraction_leaf=float(hp["min_weight_fraction_leaf"]),
        criterion=hp["criterion"],
        splitter=splitter,
        max_features=hp["max_features"],
    )


############### A) Decision tree ###############

def _train_decision_tree(X, y, hp, seed):
    tree = build_tree(X, y, _tree_params(hp, hp["splitter"]), np.random.default_rng(seed))
    return {"tree": tree}, 1, True, {"depth": tree.max_depth, "leaves": int(tree.is_leaf.sum())}


def _predict_decision_tree(params, X):
    return params["tree"].predict_value(X) > 0.5


############### B) Logistic regression ###############

def _train_logistic_regression(X, y, hp, seed):
    # 1) standardize and append the (unpenalized) intercept column
    Xs, mu, sd = _standardize(X)
    fit_intercept = hp["fit_intercept"] == "true"
    A = _design(Xs, fit_intercept, hp["intercept_scaling"])
    n, d = Xs.shape

    # 2) penalty weights; C scales the summed loss, so lambda = 1 / (C n) on the mean loss
    lam = 1.0 / (hp["C"] * n)
    l1 = l2 = 0.0
    if hp["penalty"] == "l2":
        l2 = lam
    elif hp["penalty"] == "l1":
        l1 = lam
    elif hp["penalty"] == "elasticnet":
        l1, l2 = lam * hp["l1_ratio"], lam * (1.0 - hp["l1_ratio"])

    # 3) proximal gradient with step 1/L, L = 0.25 * sigma_max(A)^2 / n
    eta = 1.0 / (0.25 * _lipschitz(A))
    theta = np.zeros(A.shape[1])
    max_iter = int(hp["max_iteration"])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = A.T @ (expit(A @ theta) - y) / n
        step = theta - eta * grad
        new = step.copy()
        new[:d] = _prox(step[:d], eta, l1, l2)
        delta = np.max(np.abs(new - theta))
        theta = new
        if delta <= hp["tol"] * max(1.0, np.max(np.abs(theta))):
            converged = True
            break

    params = {"theta": theta, "mu": mu, "sd": sd, "fit_intercept": fit_intercept,
              "intercept_scaling": float(hp["intercept_scaling"])}
    return params, it, converged, {}


def _predict_linear(params, X):
    return _linear_score(params, X) > 0


############### C) Linear SVM ###############

def _svm_objective(theta, A, ypm, cw, d, lam, loss, penalty):
    slack = np.maximum(0.0, 1.0 - ypm * (A @ theta))
    data_term = np.mean(cw * (slack if loss == "hinge" else slack ** 2))
    w = theta[:d]
    reg = lam * np.abs(w).sum() if penalty == "l1" else 0.5 * lam * np.dot(w, w)
    return data_term + reg


def _train_svm(X, y, hp, seed):
    Xs, mu, sd = _standardize(X)
    fit_intercept = hp["fit_intercept"] == "true"
    A = _design(Xs, fit_intercept, hp["intercept_scaling"])
    n, d = Xs.shape
    ypm = 2.0 * y - 1.0

    if hp["class_weight"] == "balanced":
        n_pos = y.sum()
        cw = np.where(y == 1, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))
    else:
        cw = np.ones(n)

    lam = 1.0 / (hp["C"] * n)
    l1, l2 = (lam, 0.0) if hp["penalty"] == "l1" else (0.0, lam)
    loss = hp["loss"]
    L = cw.max() * _lipschitz(A) * (2.0 if loss == "squared_hinge" else 1.0)
    eta0 = 1.0 / L

    theta = np.zeros(A.shape[1])
    best, best_obj = theta, _svm_objective(theta, A, ypm, cw, d, lam, loss, hp["penalty"])
    converged = False
    it = 0
    for it in range(1, SVM_MAX_ITER + 1):
        margin = ypm * (A @ theta)
        if loss == "hinge":
            g = -(A.T @ (cw * ypm * (margin < 1.0))) / n
            eta = eta0 / math.sqrt(it)
        else:
            g = -2.0 * (A.T @ (cw * ypm * np.maximum(0.0, 1.0 - margin))) / n
            eta = eta0
        step = theta - eta * g
        new = step.copy()
        new[:d] = _prox(step[:d], eta, l1, l2)
        delta = np.max(np.abs(new - theta))
        theta = new
        obj = _svm_objective(theta, A, ypm, cw, d, lam, loss, hp["penalty"])
        if obj < best_obj:
            best, best_obj = theta, obj
        if delta <= hp["tol"] * max(1.0, np.max(np.abs(theta))):
            converged = True
            break

    params = {"theta": best, "mu": mu, "sd": sd, "fit_intercept": fit_intercept,
              "intercept_scaling": float(hp["intercept_scaling"])}
    return params, it, converged, {"objective": float(best_obj)}


############### D) Random forest ###############

def _train_random_forest(X, y, hp, seed):
    n = X.shape[0]
    tree_params = _tree_params(hp, "best")
    n_trees = int(hp["n_estimators"])
    m = min(n, max(1, math.ceil(hp["max_samples"] * n - 1e-9)))
    sub_rng = np.random.default_rng([seed, 1])
    oob = hp["oob_score"] == "true"
    oob_votes, oob_counts = np.zeros(n), np.zeros(n)

    trees = []
    for i in range(n_trees):
        if m >= n:
            idx = np.arange(n)
        else:
            idx = np.sort(sub_rng.choice(n, size=m, replace=False))
        # tree i draws feature subsets from seed + i, so tree 0 matches a lone DT
        tree = build_tree(X[idx], y[idx], tree_params, np.random.default_rng(seed + i))
        trees.append(tree)
        if oob and m < n:
            out = np.setdiff1d(np.arange(n), idx)
            oob_votes[out] += tree.predict_value(X[out]) > 0.5
            oob_counts[out] += 1

    extra = {}
    if oob:
        seen = oob_counts > 0
        if seen.any():
            oob_pred = oob_votes[seen] / oob_counts[seen] >= 0.5
            extra["oob_score"] = float(np.mean(oob_pred == y[seen]))
        else:
            extra["oob_score"] = float("nan")
    return {"trees": trees}, n_trees, True, extra


def forest_votes(model: TrainedModel, rows) -> np.ndarray:
    """Per-tree 0/1 predictions, shape (n_trees, n_rows)."""
    X = np.asarray(rows, dtype=float)
    return np.stack([t.predict_value(X) > 0.5 for t in model.params["trees"]]).astype(np.int8)


def _predict_random_forest(params, X):
    votes = np.stack([t.predict_value(X) > 0.5 for t in params["trees"]])
    return votes.mean(axis=0) >= 0.5


############### E) Discriminant analysis ###############

def _ledoit_wolf_shrinkage(Xc) -> float:
    n, d = Xc.shape
    X2 = Xc ** 2
    emp_trace = X2.sum(axis=0) / n
    mu = emp_trace.sum() / d
    beta_ = (X2.T @ X2).sum()
    delta_ = ((Xc.T @ Xc) ** 2).sum() / n ** 2
    beta = (beta_ / n - delta_) / (d * n)
    delta = (delta_ - 2.0 * mu * emp_trace.sum() + d * mu ** 2) / d
    if delta <= 0:
        return 0.0
    return float(min(max(min(beta, delta) / delta, 0.0), 1.0))


def _gaussian_terms(cov, tol: float):
    vals, vecs = np.linalg.eigh(cov)
    floor = max(tol * vals.max(), 1e-12)
    vals = np.maximum(vals, floor)
    return {"vecs": vecs, "vals": vals, "logdet": float(np.log(vals).sum())}


def _train_discriminant_analysis(X, y, hp, seed):
    Xs, mu, sd = _standardize(X)
    n, d = Xs.shape
    quadratic = hp["linear(0)_quadratic(1)"] == "quadratic"
    classes = []
    centered = []
    for k in (0, 1):
        Xk = Xs[y == k]
        mean_k = Xk.mean(axis=0)
        centered.append(Xk - mean_k)
        classes.append({"prior": len(Xk) / n, "mean": mean_k})

    shrinkage = 0.0
    if quadratic:
        r = hp["reg_param"]
        for k, Xc in enumerate(centered):
            cov = Xc.T @ Xc / max(len(Xc) - 1, 1)
            cov = (1.0 - r) * cov + r * np.eye(d)
            classes[k].update(_gaussian_terms(cov, hp["tol"]))
    else:
        Xc = np.vstack(centered)
        cov = Xc.T @ Xc / n
        if hp["Shrinkage_Linear"] == "auto":
            shrinkage = _ledoit_wolf_shrinkage(Xc)
        elif hp["Shrinkage_Linear"] == "fixed":
            shrinkage = float(hp["reg_param"])
        cov = (1.0 - shrinkage) * cov + shrinkage * (np.trace(cov) / d) * np.eye(d)
        terms = _gaussian_terms(cov, hp["tol"])
        for c in classes:
            c.update(terms)

    return {"classes": classes, "mu": mu, "sd": sd}, 1, True, {"shrinkage": shrinkage}


def _predict_discriminant_analysis(params, X):
    Xs = (X - params["mu"]) / params["sd"]
    scores = []
    for c in params["classes"]:
        z = ((Xs - c["mean"]) @ c["vecs"]) / np.sqrt(c["vals"])
        scores.append(math.log(c["prior"]) - 0.5 * c["logdet"] - 0.5 * (z ** 2).sum(axis=1))
    return scores[1] > scores[0]


_TRAINERS = {
    "decision_tree": _train_decision_tree,
    "logistic_regression": _train_logistic_regression,
    "svm": _train_svm,
    "random_forest": _train_random_forest,
    "discriminant_analysis": _train_discriminant_analysis,
}

_PREDICTORS = {
    "decision_tree": _predict_decision_tree,
    "logistic_regression": _predict_linear,
    "svm": _predict_linear,
    "random_forest": _predict_random_forest,
    "discriminant_analysis": _predict_discriminant_analysis,
}
