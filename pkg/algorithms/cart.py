"""
CART tree builder shared by the classification trainers (gini / entropy on
0-1 labels) and the regression surrogates (squared error).

Split search is vectorised across the candidate features of a node: one
argsort + cumulative sums per node instead of a Python loop per threshold.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

CRITERIA = ("gini", "entropy", "mse")


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 64
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    min_weight_fraction_leaf: float = 0.0
    criterion: str = "gini"
    splitter: str = "best"
    max_features: object = "all"

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion '{self.criterion}'")
        if self.splitter not in ("best", "random"):
            raise ValueError(f"unknown splitter '{self.splitter}'")
        if self.max_depth < 0 or self.min_samples_leaf < 1 or self.min_samples_split < 2:
            raise ValueError("invalid tree size constraints")


class Tree:
    """Flat-array binary tree. Leaves have feature == -1."""

    def __init__(self, feature, threshold, left, right, value, n_samples, depth):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.depth = np.asarray(depth, dtype=np.int64)

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def max_depth(self) -> int:
        return int(self.depth[self.is_leaf].max())

    @property
    def leaf_sizes(self) -> np.ndarray:
        return self.n_samples[self.is_leaf]

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            ids = node[active]
            go_left = X[active, self.feature[ids]] <= self.threshold[ids]
            node[active] = np.where(go_left, self.left[ids], self.right[ids])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
            "left": self.left.tolist(), "right": self.right.tolist(),
            "value": self.value.tolist(), "n_samples": self.n_samples.tolist(),
            "depth": self.depth.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"],
                   d["value"], d["n_samples"], d["depth"])


def resolve_max_features(max_features, n_features: int) -> int:
    if max_features in (None, "all"):
        return n_features
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, int(math.log2(n_features))) if n_features > 1 else 1
    if isinstance(max_features, float) and 0.0 < max_features <= 1.0:
        return max(1, int(max_features * n_features))
    if isinstance(max_features, int) and max_features >= 1:
        return min(n_features, max_features)
    raise ValueError(f"invalid max_features {max_features!r}")


def build_tree(X, y, params: TreeParams, rng: np.random.Generator,
               sample_weight=None) -> Tree:
    """
    Grow a tree depth-first. A node becomes a leaf when it is pure, at
    max_depth, below min_samples_split, or when no split keeps both
    children at min_samples_leaf / min_weight_fraction_leaf.
    Leaf value is the weighted mean target (P(label=1) for classification).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    min_w_leaf = params.min_weight_fraction_leaf * w.sum()
    k_features = resolve_max_features(params.max_features, d)

    feature, threshold, left, right, value, n_samples, depth = [], [], [], [], [], [], []

    def new_node(level: int) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        n_samples.append(0)
        depth.append(level)
        return len(feature) - 1

    stack = [(np.arange(n), new_node(0))]
    while stack:
        idx, node = stack.pop()
        wn, yn = w[idx], y[idx]
        value[node] = float(np.dot(wn, yn) / wn.sum())
        n_samples[node] = len(idx)
        level = depth[node]

        if (level >= params.max_depth or len(idx) < params.min_samples_split
                or len(idx) < 2 * params.min_samples_leaf
                or wn.sum() < 2 * min_w_leaf or np.ptp(yn) == 0):
            continue

        if k_features < d:
            feats = np.sort(rng.choice(d, size=k_features, replace=False))
        else:
            feats = np.arange(d)
        Xn = X[np.ix_(idx, feats)]
        if params.splitter == "best":
            found = _best_split(Xn, yn, wn, params, min_w_leaf)
        else:
            found = _random_split(Xn, yn, wn, params, min_w_leaf, rng)
        if found is None:
            continue

        col, thr = found
        mask = X[idx, feats[col]] <= thr
        left_id, right_id = new_node(level + 1), new_node(level + 1)
        feature[node], threshold[node] = int(feats[col]), float(thr)
        left[node], right[node] = left_id, right_id
        stack.append((idx[~mask], right_id))
        stack.append((idx[mask], left_id))

    return Tree(feature, threshold, left, right, value, n_samples, depth)


def _children_impurity(wl, sl, wr, sr, criterion, syy_l=None, syy_r=None):
    """Weighted impurity of the two children; smaller is better."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == "mse":
            return (syy_l - sl * sl / wl) + (syy_r - sr * sr / wr)
        pl, pr = sl / wl, sr / wr
        if criterion == "gini":
            return wl * 2.0 * pl * (1.0 - pl) + wr * 2.0 * pr * (1.0 - pr)
        return -(wl * (xlogy(pl, pl) + xlogy(1.0 - pl, 1.0 - pl))
                 + wr * (xlogy(pr, pr) + xlogy(1.0 - pr, 1.0 - pr)))


def _best_split(Xn, yn, wn, params: TreeParams, min_w_leaf: float):
    m = Xn.shape[0]
    order = np.argsort(Xn, axis=0, kind="mergesort")
    xs = np.take_along_axis(Xn, order, axis=0)
    ws = wn[order]
    wys = (wn * yn)[order]
    wl = np.cumsum(ws, axis=0)[:-1]
    sl = np.cumsum(wys, axis=0)[:-1]
    wr = wn.sum() - wl
    sr = np.dot(wn, yn) - sl
    syy_l = syy_r = None
    if params.criterion == "mse":
        syy_l = np.cumsum((wn * yn * yn)[order], axis=0)[:-1]
        syy_r = np.dot(wn, yn * yn) - syy_l

    counts = np.arange(1, m)[:, None]
    valid = ((xs[1:] > xs[:-1]) & (counts >= params.min_samples_leaf)
             & (m - counts >= params.min_samples_leaf)
             & (wl >= min_w_leaf) & (wr >= min_w_leaf))
    if not valid.any():
        return None
    impurity = _children_impurity(wl, sl, wr, sr, params.criterion, syy_l, syy_r)
    impurity = np.where(valid, impurity, np.inf)
    pos, col = np.unravel_index(int(np.argmin(impurity)), impurity.shape)
    lo, hi = xs[pos, col], xs[pos + 1, col]
    thr = 0.5 * (lo + hi)
    if thr >= hi:
        thr = lo
    return int(col), float(thr)


def _random_split(Xn, yn, wn, params: TreeParams, min_w_leaf: float, rng):
    m = Xn.shape[0]
    lo, hi = Xn.min(axis=0), Xn.max(axis=0)
    thr = rng.uniform(lo, hi)
    thr = np.where(thr >= hi, lo, thr)
    go_left = Xn <= thr
    wl = wn @ go_left
    sl = (wn * yn) @ go_left
    wr = wn.sum() - wl
    sr = np.dot(wn, yn) - sl
    syy_l = syy_r = None
    if params.criterion == "mse":
        syy_l = (wn * yn * yn) @ go_left
        syy_r = np.dot(wn, yn * yn) - syy_l
    counts = go_left.sum(axis=0)
    valid = ((hi > lo) & (counts >= params.min_samples_leaf)
             & (m - counts >= params.min_samples_leaf)
             & (wl >= min_w_leaf) & (wr >= min_w_leaf))
    if not valid.any():
        return None
    impurity = np.where(valid, _children_impurity(wl, sl, wr, sr, params.criterion, syy_l, syy_r), np.inf)
    col = int(np.argmin(impurity))
    return col, float(thr[col])
