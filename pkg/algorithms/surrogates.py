"""
Regressors mapping encoded HP configurations to a fairness value in [0, 1].

kinds: baseline (training mean), mlp (ReLU network, Adam), svr (RBF
epsilon-SVR solved by SMO), forest (bagged regression trees) and gbt
(squared-error gradient boosting). Every fitted model is tagged with the
HP space version it was trained on and serializes to JSON.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from algorithms.cart import Tree, TreeParams, build_tree
from algorithms.hp_space import HPConfig, HPSpace
from core.errors import SurrogateError
from Utils import derive_seed, dump_json, load_json

logger = logging.getLogger(__name__)

KINDS = ("baseline", "mlp", "svr", "forest", "gbt")
FORMAT = "surrogate/1"

DEFAULTS = {
    "baseline": {},
    "mlp": {"hidden_layers": 4, "width": 32, "epochs": 50, "batch_size": 64,
            "learning_rate": 1e-3, "beta1": 0.9, "beta2": 0.999, "adam_eps": 1e-8},
    "svr": {"C": 1.0, "epsilon": 0.01, "tol": 1e-3, "max_iter": 10000},
    "forest": {"n_estimators": 100, "max_depth": 35, "bootstrap": True,
               "min_samples_leaf": 1, "max_features": "all"},
    "gbt": {"n_rounds": 200, "learning_rate": 0.1, "max_depth": 30,
            "min_samples_leaf": 1, "reg_lambda": 0.0},
}


def resolve_options(kind: str, overrides: dict | None = None) -> dict:
    if kind not in KINDS:
        raise ValueError(f"unknown surrogate kind '{kind}'; expected one of {list(KINDS)}")
    options = dict(DEFAULTS[kind])
    unknown = set(overrides or {}) - set(options)
    if unknown:
        raise ValueError(f"{kind}: unknown options {sorted(unknown)}")
    options.update(overrides or {})
    return options


############### Encoding ###############

def encode(config: HPConfig, space: HPSpace) -> np.ndarray:
    """Numeric dims pass through (log dims as ln), categoricals as level index."""
    space.validate(config)
    out = np.empty(len(space.dims))
    for i, (dim, value) in enumerate(zip(space.dims, config.values)):
        if not dim.is_numeric:
            out[i] = float(dim.levels.index(value))
        elif dim.scale == "log":
            out[i] = math.log(value)
        else:
            out[i] = float(value)
    return out


def encode_many(configs, space: HPSpace) -> np.ndarray:
    if not configs:
        return np.zeros((0, len(space.dims)))
    return np.vstack([encode(c, space) for c in configs])


def _standardize_fit(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return mu, np.where(sd > 0, sd, 1.0)


############### baseline ###############

class MeanRegressor:
    def __init__(self, mean: float = 0.0):
        self.mean = mean

    def fit(self, X, y, seed, options):
        self.mean = float(np.mean(y))
        return self

    def predict(self, X):
        return np.full(X.shape[0], self.mean)

    def to_dict(self):
        return {"mean": self.mean}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean"]))


############### mlp ###############

class MLPRegressor:
    """Fully connected ReLU layers, linear output, MSE loss, Adam."""

    def __init__(self):
        self.weights = []
        self.biases = []
        self.mu = None
        self.sd = None
        self.loss_curve = []

    def init_params(self, n_in: int, hidden_layers: int, width: int, rng):
        sizes = [n_in] + [width] * hidden_layers + [1]
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    def _forward(self, X):
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = z if k == last else np.maximum(z, 0.0)
            acts.append(h)
        return acts

    def loss_and_grads(self, X, y):
        """MSE on (X, y) with analytic gradients, ordered as weights then biases per layer."""
        acts = self._forward(X)
        out = acts[-1][:, 0]
        m = X.shape[0]
        loss = float(np.mean((out - y) ** 2))
        delta = (2.0 / m) * (out - y)[:, None]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w[k] = acts[k].T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (acts[k] > 0)
        return loss, grads_w, grads_b

    def fit(self, X, y, seed, options):
        rng = np.random.default_rng(seed)
        self.mu, self.sd = _standardize_fit(X)
        Xs = (X - self.mu) / self.sd
        self.init_params(X.shape[1], int(options["hidden_layers"]), int(options["width"]), rng)

        lr, b1, b2, eps = (options["learning_rate"], options["beta1"],
                           options["beta2"], options["adam_eps"])
        params = self.weights + self.biases
        m_state = [np.zeros_like(p) for p in params]
        v_state = [np.zeros_like(p) for p in params]
        step = 0
        batch = int(options["batch_size"])
        n = X.shape[0]
        self.loss_curve = []
        for epoch in range(1, int(options["epochs"]) + 1):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                loss, gw, gb = self.loss_and_grads(Xs[idx], y[idx])
                if not math.isfinite(loss):
                    raise SurrogateError(f"mlp diverged at epoch {epoch} (loss={loss})")
                total += loss * len(idx)
                step += 1
                for p, g, mv, vv in zip(params, gw + gb, m_state, v_state):
                    mv *= b1
                    mv += (1.0 - b1) * g
                    vv *= b2
                    vv += (1.0 - b2) * g * g
                    m_hat = mv / (1.0 - b1 ** step)
                    v_hat = vv / (1.0 - b2 ** step)
                    p -= lr * m_hat / (np.sqrt(v_hat) + eps)
            epoch_loss = total / n
            if not math.isfinite(epoch_loss):
                raise SurrogateError(f"mlp diverged at epoch {epoch} (loss={epoch_loss})")
            self.loss_curve.append(epoch_loss)
        return self

    def predict(self, X):
        return self._forward((X - self.mu) / self.sd)[-1][:, 0]

    def to_dict(self):
        return {"weights": [W.tolist() for W in self.weights],
                "biases": [b.tolist() for b in self.biases],
                "mu": self.mu.tolist(), "sd": self.sd.tolist(),
                "loss_curve": list(self.loss_curve)}

    @classmethod
    def from_dict(cls, d):
        model = cls()
        model.weights = [np.array(W, dtype=float) for W in d["weights"]]
        model.biases = [np.array(b, dtype=float) for b in d["biases"]]
        model.mu = np.array(d["mu"], dtype=float)
        model.sd = np.array(d["sd"], dtype=float)
        model.loss_curve = list(d.get("loss_curve", []))
        return model


############### svr ###############

def rbf_kernel(A, B, gamma: float):
    sq = (A ** 2).sum(axis=1)[:, None] + (B ** 2).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class EpsilonSVR:
    """
    epsilon-insensitive SVR with an RBF kernel. The dual over 2l variables
    (alpha for the upper tube side, alpha* for the lower) is solved by SMO
    with second-order working-set selection.
    """
    TAU = 1e-12

    def __init__(self):
        self.support = None
        self.coef = None
        self.rho = 0.0
        self.gamma = 1.0
        self.mu = None
        self.sd = None
        self.iterations = 0
        self.kkt_gap = math.inf
        self.hit_cap = False

    @staticmethod
    def _select(alpha, G, y, Qdiag, K, l, C):
        """Returns (i, j, gap); i == -1 when no violating pair is left."""
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        yG = y * G
        if not up.any() or not low.any():
            return -1, -1, 0.0
        score = np.where(up, -yG, -np.inf)
        i = int(np.argmax(score))
        g_max = score[i]
        g_max2 = float(np.max(np.where(low, yG, -np.inf)))
        gap = g_max + g_max2
        Ki = K[i % l][np.arange(2 * l) % l]
        b = g_max + yG
        a = Qdiag[i] + Qdiag - 2.0 * Ki
        a = np.where(a > 0, a, EpsilonSVR.TAU)
        obj = np.where(low & (b > 0), -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        if not np.isfinite(obj[j]):
            return -1, -1, gap
        return i, j, gap

    def fit(self, X, z, seed, options):
        C, eps, tol = float(options["C"]), float(options["epsilon"]), float(options["tol"])
        max_iter = int(options["max_iter"])
        self.mu, self.sd = _standardize_fit(X)
        Xs = (X - self.mu) / self.sd
        var = Xs.var()
        self.gamma = 1.0 / (Xs.shape[1] * var) if var > 0 else 1.0
        l = Xs.shape[0]
        K = rbf_kernel(Xs, Xs, self.gamma)

        # 1) variables 0..l-1 carry y=+1, l..2l-1 carry y=-1
        y = np.concatenate([np.ones(l), -np.ones(l)])
        p = np.concatenate([eps - z, eps + z])
        mod = np.arange(2 * l) % l
        Qdiag = np.diag(K)[mod]
        alpha = np.zeros(2 * l)
        G = p.copy()

        # 2) SMO iterations
        self.hit_cap = True
        it = 0
        gap = math.inf
        for it in range(1, max_iter + 1):
            i, j, gap = self._select(alpha, G, y, Qdiag, K, l, C)
            if i < 0 or gap < tol:
                self.hit_cap = False
                break
            Qi = y * y[i] * K[i % l][mod]
            Qj = y * y[j] * K[j % l][mod]
            old_i, old_j = alpha[i], alpha[j]
            if y[i] != y[j]:
                quad = max(Qdiag[i] + Qdiag[j] + 2.0 * Qi[j], self.TAU)
                delta = (-G[i] - G[j]) / quad
                diff = alpha[i] - alpha[j]
                alpha[i] += delta
                alpha[j] += delta
                if diff > 0:
                    if alpha[j] < 0:
                        alpha[j], alpha[i] = 0.0, diff
                elif alpha[i] < 0:
                    alpha[i], alpha[j] = 0.0, -diff
                if diff > 0:
                    if alpha[i] > C:
                        alpha[i], alpha[j] = C, C - diff
                elif alpha[j] > C:
                    alpha[j], alpha[i] = C, C + diff
            else:
                quad = max(Qdiag[i] + Qdiag[j] - 2.0 * Qi[j], self.TAU)
                delta = (G[i] - G[j]) / quad
                total = alpha[i] + alpha[j]
                alpha[i] -= delta
                alpha[j] += delta
                if total > C:
                    if alpha[i] > C:
                        alpha[i], alpha[j] = C, total - C
                elif alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, total
                if total > C:
                    if alpha[j] > C:
                        alpha[j], alpha[i] = C, total - C
                elif alpha[i] < 0:
                    alpha[i], alpha[j] = 0.0, total
            G += Qi * (alpha[i] - old_i) + Qj * (alpha[j] - old_j)
        if self.hit_cap:
            _, _, gap = self._select(alpha, G, y, Qdiag, K, l, C)
            logger.warning("svr: iteration cap %d reached, KKT gap %.3g", max_iter, gap)
        self.iterations = it
        self.kkt_gap = float(gap)

        # 3) rho from free variables, else the midpoint of the feasible interval
        yG = y * G
        at_upper, at_lower = alpha >= C, alpha <= 0
        free = ~at_upper & ~at_lower
        if free.any():
            self.rho = float(yG[free].mean())
        else:
            ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
            lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
            ub = yG[ub_mask].min() if ub_mask.any() else math.inf
            lb = yG[lb_mask].max() if lb_mask.any() else -math.inf
            self.rho = float((ub + lb) / 2.0) if math.isfinite(ub + lb) else 0.0

        coef = alpha[:l] - alpha[l:]
        keep = coef != 0
        self.support, self.coef = Xs[keep], coef[keep]
        return self

    def predict(self, X):
        if self.coef.size == 0:
            return np.full(X.shape[0], -self.rho)
        Xs = (X - self.mu) / self.sd
        return rbf_kernel(Xs, self.support, self.gamma) @ self.coef - self.rho

    def to_dict(self):
        return {"support": self.support.tolist(), "coef": self.coef.tolist(), "rho": self.rho,
                "gamma": self.gamma, "mu": self.mu.tolist(), "sd": self.sd.tolist(),
                "iterations": self.iterations, "kkt_gap": self.kkt_gap, "hit_cap": self.hit_cap}

    @classmethod
    def from_dict(cls, d):
        model = cls()
        n_features = len(d["mu"])
        model.support = np.array(d["support"], dtype=float).reshape(-1, n_features)
        model.coef = np.array(d["coef"], dtype=float)
        model.rho = float(d["rho"])
        model.gamma = float(d["gamma"])
        model.mu = np.array(d["mu"], dtype=float)
        model.sd = np.array(d["sd"], dtype=float)
        model.iterations = int(d["iterations"])
        model.kkt_gap = float(d["kkt_gap"]) if d["kkt_gap"] is not None else math.inf
        model.hit_cap = bool(d["hit_cap"])
        return model


############### forest ###############

class ForestRegressor:
    def __init__(self):
        self.trees = []

    def fit(self, X, y, seed, options):
        n = X.shape[0]
        params = TreeParams(max_depth=int(options["max_depth"]),
                            min_samples_leaf=int(options["min_samples_leaf"]),
                            criterion="mse", max_features=options["max_features"])
        self.trees = []
        for i in range(int(options["n_estimators"])):
            rng = np.random.default_rng(derive_seed(seed, "tree", i))
            idx = rng.integers(0, n, size=n) if options["bootstrap"] else np.arange(n)
            self.trees.append(build_tree(X[idx], y[idx], params, rng))
        return self

    def tree_predictions(self, X) -> np.ndarray:
        return np.stack([t.predict_value(X) for t in self.trees])

    def predict(self, X):
        return self.tree_predictions(X).mean(axis=0)

    def to_dict(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        model = cls()
        model.trees = [Tree.from_dict(t) for t in d["trees"]]
        return model


############### gbt ###############

class BoostedTrees:
    """F_0 = mean(y); F_m = F_{m-1} + lr * tree fit on the residuals."""

    def __init__(self):
        self.init = 0.0
        self.learning_rate = 0.1
        self.trees = []
        self.train_loss_ = []

    def fit(self, X, y, seed, options):
        params = TreeParams(max_depth=int(options["max_depth"]),
                            min_samples_leaf=int(options["min_samples_leaf"]), criterion="mse")
        lam = float(options["reg_lambda"])
        self.learning_rate = float(options["learning_rate"])
        self.init = float(np.mean(y))
        F = np.full(X.shape[0], self.init)
        self.trees, self.train_loss_ = [], []
        for m in range(int(options["n_rounds"])):
            residual = y - F
            tree = build_tree(X, residual, params, np.random.default_rng(derive_seed(seed, "round", m)))
            if lam > 0:
                # leaf weight = sum(residual) / (count + lambda)
                leaves = tree.apply(X)
                sums = np.bincount(leaves, weights=residual, minlength=tree.node_count)
                counts = np.bincount(leaves, minlength=tree.node_count)
                value = tree.value.copy()
                value[tree.is_leaf] = sums[tree.is_leaf] / (counts[tree.is_leaf] + lam)
                tree.value = value
            F = F + self.learning_rate * tree.predict_value(X)
            self.trees.append(tree)
            self.train_loss_.append(float(np.mean((y - F) ** 2)))
        return self

    def predict(self, X):
        out = np.full(X.shape[0], self.init)
        for tree in self.trees:
            out = out + self.learning_rate * tree.predict_value(X)
        return out

    def to_dict(self):
        return {"init": self.init, "learning_rate": self.learning_rate,
                "trees": [t.to_dict() for t in self.trees], "train_loss": self.train_loss_}

    @classmethod
    def from_dict(cls, d):
        model = cls()
        model.init = float(d["init"])
        model.learning_rate = float(d["learning_rate"])
        model.trees = [Tree.from_dict(t) for t in d["trees"]]
        model.train_loss_ = list(d.get("train_loss", []))
        return model


_MODELS = {
    "baseline": MeanRegressor,
    "mlp": MLPRegressor,
    "svr": EpsilonSVR,
    "forest": ForestRegressor,
    "gbt": BoostedTrees,
}


############### Public API ###############

@dataclass(frozen=True)
class Surrogate:
    kind: str
    space_tag: str
    model: object
    options: dict = field(default_factory=dict)
    seed: int = 0


def fit(kind: str, X, y, seed: int, space_tag: str, options: dict | None = None) -> Surrogate:
    """
    Inputs: surrogate kind, encoded configs X (n x d), targets y in [0, 1],
    seed, the HP space version tag, and optional constant overrides.
    Returns: a fitted Surrogate; same inputs and seed give the same model.
    """
    opts = resolve_options(kind, options)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise SurrogateError(f"{kind}: empty training set")
    if y.shape != (X.shape[0],):
        raise SurrogateError(f"{kind}: {X.shape[0]} configs but {y.shape} targets")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise SurrogateError(f"{kind}: non-finite training data")
    model = _MODELS[kind]().fit(X, y, int(seed), opts)
    return Surrogate(kind=kind, space_tag=space_tag, model=model, options=opts, seed=int(seed))


def fit_configs(kind: str, configs, targets, space: HPSpace, seed: int,
                options: dict | None = None) -> Surrogate:
    return fit(kind, encode_many(list(configs), space), targets, seed, space.version_tag, options)


def clamp(values) -> np.ndarray:
    return np.clip(np.asarray(values, dtype=float), 0.0, 1.0)


def predict_raw(s: Surrogate, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0 or X.size == 0:
        return np.zeros(0)
    return s.model.predict(X)


def predict(s: Surrogate, X, space_tag: str | None = None) -> np.ndarray:
    """Model output clamped to [0, 1]."""
    if space_tag is not None and space_tag != s.space_tag:
        raise SurrogateError(f"surrogate was fit on space {s.space_tag}, configs come from {space_tag}")
    return clamp(predict_raw(s, X))


def predict_configs(s: Surrogate, configs, space: HPSpace) -> np.ndarray:
    return predict(s, encode_many(list(configs), space), space.version_tag)


############### Persistence ###############

def save(s: Surrogate, path) -> None:
    dump_json({"format": FORMAT, "kind": s.kind, "space": s.space_tag, "seed": s.seed,
               "options": s.options, "params": s.model.to_dict()}, path)


def load(path) -> Surrogate:
    d = load_json(path)
    if d.get("format") != FORMAT:
        raise SurrogateError(f"{path}: not a surrogate file (format {d.get('format')!r})")
    kind = d["kind"]
    if kind not in _MODELS:
        raise SurrogateError(f"{path}: unknown surrogate kind '{kind}'")
    return Surrogate(kind=kind, space_tag=d["space"], model=_MODELS[kind].from_dict(d["params"]),
                     options=d.get("options", {}), seed=int(d.get("seed", 0)))
