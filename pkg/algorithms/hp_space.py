"""
Typed hyperparameter spaces for the five training algorithms.

Ranges and defaults are decisions of this project (the algorithms' HP lists
do not come with ranges). The table is versioned: trace files store the
space snapshot and refuse to load against a different version.
"""
import math
from dataclasses import dataclass

import numpy as np

from core.errors import IncompatibleSpaceError, InvalidConfigError

SPACE_VERSION = "1"

ALGORITHMS = (
    "decision_tree",
    "logistic_regression",
    "svm",
    "random_forest",
    "discriminant_analysis",
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class HPDimension:
    name: str
    kind: str
    lo: float = 0.0
    hi: float = 1.0
    scale: str = "linear"
    integer: bool = False
    levels: tuple = ()
    inert: bool = False

    def __post_init__(self):
        if self.kind == NUMERIC:
            if not self.lo < self.hi:
                raise ValueError(f"{self.name}: lo must be < hi")
            if self.scale not in ("linear", "log"):
                raise ValueError(f"{self.name}: unknown scale '{self.scale}'")
            if self.scale == "log" and self.lo <= 0:
                raise ValueError(f"{self.name}: log scale requires lo > 0")
        elif self.kind == CATEGORICAL:
            object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
            if len(self.levels) < 2:
                raise ValueError(f"{self.name}: categorical dims need >= 2 levels")
        else:
            raise ValueError(f"{self.name}: unknown kind '{self.kind}'")

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC

    def check(self, value) -> None:
        if self.is_numeric:
            if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, float, np.integer, np.floating)):
                raise InvalidConfigError(f"{self.name}: expected a number, got {value!r}")
            if not math.isfinite(value) or value < self.lo or value > self.hi:
                raise InvalidConfigError(f"{self.name}: {value} outside [{self.lo}, {self.hi}]")
            if self.integer and float(value) != math.floor(value):
                raise InvalidConfigError(f"{self.name}: {value} is not integer-valued")
        elif value not in self.levels:
            raise InvalidConfigError(f"{self.name}: {value!r} is not one of {list(self.levels)}")

    def sample(self, rng: np.random.Generator):
        if not self.is_numeric:
            return self.levels[int(rng.integers(len(self.levels)))]
        if self.scale == "log":
            value = math.exp(rng.uniform(math.log(self.lo), math.log(self.hi)))
        else:
            value = rng.uniform(self.lo, self.hi)
        return self.clip(value)

    def clip(self, value: float):
        value = min(max(float(value), self.lo), self.hi)
        if self.integer:
            value = float(min(max(round(value), math.ceil(self.lo)), math.floor(self.hi)))
        return value

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.is_numeric:
            d.update({"lo": self.lo, "hi": self.hi, "scale": self.scale, "integer": self.integer})
        else:
            d["levels"] = list(self.levels)
        if self.inert:
            d["inert"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HPDimension":
        if d["kind"] == NUMERIC:
            return cls(name=d["name"], kind=NUMERIC, lo=float(d["lo"]), hi=float(d["hi"]),
                       scale=d.get("scale", "linear"), integer=bool(d.get("integer", False)),
                       inert=bool(d.get("inert", False)))
        return cls(name=d["name"], kind=CATEGORICAL, levels=tuple(d["levels"]),
                   inert=bool(d.get("inert", False)))


@dataclass(frozen=True)
class HPConfig:
    """One value per dimension, in dimension order. Categoricals hold level names."""
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class HPSpace:
    algorithm: str
    dims: tuple
    version: str = SPACE_VERSION

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.algorithm}: dimension names must be unique")

    @property
    def names(self) -> list:
        return [d.name for d in self.dims]

    @property
    def version_tag(self) -> str:
        return f"{self.algorithm}@{self.version}"

    def index(self, name: str) -> int:
        return self.names.index(name)

    def validate(self, config: HPConfig) -> HPConfig:
        if len(config.values) != len(self.dims):
            raise InvalidConfigError(
                f"{self.algorithm}: config has {len(config.values)} values, space has {len(self.dims)} dims")
        for dim, value in zip(self.dims, config.values):
            dim.check(value)
        return config

    def is_valid(self, config: HPConfig) -> bool:
        try:
            self.validate(config)
        except InvalidConfigError:
            return False
        return True

    def as_mapping(self, config: HPConfig) -> dict:
        return dict(zip(self.names, config.values))

    def from_mapping(self, mapping: dict) -> HPConfig:
        unknown = set(mapping) - set(self.names)
        if unknown:
            raise InvalidConfigError(f"{self.algorithm}: unknown dimensions {sorted(unknown)}")
        missing = [n for n in self.names if n not in mapping]
        if missing:
            raise InvalidConfigError(f"{self.algorithm}: missing dimensions {missing}")
        values = []
        for dim in self.dims:
            value = mapping[dim.name]
            values.append(float(value) if dim.is_numeric and not isinstance(value, bool) else value)
        return self.validate(HPConfig(tuple(values)))

    def sample(self, rng: np.random.Generator) -> HPConfig:
        return HPConfig(tuple(d.sample(rng) for d in self.dims))

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "version": self.version,
                "dims": [d.to_dict() for d in self.dims]}

    @classmethod
    def from_dict(cls, d: dict) -> "HPSpace":
        return cls(algorithm=d["algorithm"], version=str(d["version"]),
                   dims=tuple(HPDimension.from_dict(x) for x in d["dims"]))

    def check_compatible(self, other: "HPSpace") -> None:
        if self.to_dict() != other.to_dict():
            raise IncompatibleSpaceError(
                f"space snapshot {other.version_tag} does not match current definition {self.version_tag}")


def _num(name, lo, hi, scale="linear", integer=False, inert=False):
    return HPDimension(name, NUMERIC, lo=float(lo), hi=float(hi), scale=scale, integer=integer, inert=inert)


def _cat(name, *levels, inert=False):
    return HPDimension(name, CATEGORICAL, levels=tuple(levels), inert=inert)


_TREE_DIMS = (
    _num("max_depth", 1, 64, integer=True),
    _num("min_samples_split", 2, 64, integer=True),
    _num("min_samples_leaf", 1, 32, integer=True),
    _num("min_weight_fraction_leaf", 0.0, 0.45),
)

_SPACES = {
    "decision_tree": _TREE_DIMS + (
        _cat("criterion", "gini", "entropy"),
        _cat("splitter", "best", "random"),
        _cat("max_features", "all", "sqrt", "log2"),
    ),
    "logistic_regression": (
        _num("tol", 1e-6, 1e-1, scale="log"),
        _num("C", 1e-4, 1e4, scale="log"),
        _num("intercept_scaling", 1e-1, 1e1, scale="log"),
        _num("max_iteration", 10, 1000, integer=True),
        _num("l1_ratio", 0.0, 1.0),
        _cat("solver", "lbfgs", "liblinear", "newton-cg", "sag", "saga", inert=True),
        _cat("penalty", "l2", "l1", "elasticnet", "none"),
        _cat("dual_prime", "primal", "dual", inert=True),
        _cat("fit_intercept", "true", "false"),
        _cat("multi_class", "auto", "ovr", "multinomial", inert=True),
    ),
    "svm": (
        _num("tol", 1e-6, 1e-1, scale="log"),
        _num("C", 1e-4, 1e4, scale="log"),
        _num("intercept_scaling", 1e-1, 1e1, scale="log"),
        _cat("penalty", "l2", "l1"),
        _cat("loss", "squared_hinge", "hinge"),
        _cat("degree", "1", "2", "3", "4", "5", inert=True),
        _cat("fit_intercept", "true", "false"),
        _cat("class_weight", "none", "balanced"),
    ),
    "random_forest": _TREE_DIMS + (
        _num("n_estimators", 1, 32, integer=True),
        _num("max_samples", 0.1, 1.0),
        _cat("criterion", "gini", "entropy"),
        _cat("max_features", "sqrt", "log2", "all"),
        _cat("oob_score", "false", "true"),
        _cat("warm_start", "false", "true", inert=True),
    ),
    "discriminant_analysis": (
        _num("tol", 1e-6, 1e-1, scale="log"),
        _num("reg_param", 0.0, 1.0),
        _cat("linear(0)_quadratic(1)", "linear", "quadratic"),
        _cat("solve_Linear", "svd", "lsqr", "eigen", inert=True),
        _cat("Shrinkage_Linear", "none", "auto", "fixed"),
        _cat("component", "all", "reduced", inert=True),
        _cat("store_covariance", "false", "true", inert=True),
        _cat("type_dataset", "raw", "scaled", inert=True),
    ),
}

# Documented defaults; every value must validate against its space.
DEFAULTS = {
    "decision_tree": {
        "max_depth": 64.0, "min_samples_split": 2.0, "min_samples_leaf": 1.0,
        "min_weight_fraction_leaf": 0.0, "criterion": "gini", "splitter": "best",
        "max_features": "all",
    },
    "logistic_regression": {
        "tol": 1e-4, "C": 1.0, "intercept_scaling": 1.0, "max_iteration": 100.0,
        "l1_ratio": 0.5, "solver": "lbfgs", "penalty": "l2", "dual_prime": "primal",
        "fit_intercept": "true", "multi_class": "auto",
    },
    "svm": {
        "tol": 1e-4, "C": 1.0, "intercept_scaling": 1.0, "penalty": "l2",
        "loss": "squared_hinge", "degree": "3", "fit_intercept": "true", "class_weight": "none",
    },
    "random_forest": {
        "max_depth": 64.0, "min_samples_split": 2.0, "min_samples_leaf": 1.0,
        "min_weight_fraction_leaf": 0.0, "n_estimators": 10.0, "max_samples": 1.0,
        "criterion": "gini", "max_features": "sqrt", "oob_score": "false", "warm_start": "false",
    },
    "discriminant_analysis": {
        "tol": 1e-4, "reg_param": 0.0, "linear(0)_quadratic(1)": "linear",
        "solve_Linear": "svd", "Shrinkage_Linear": "none", "component": "all",
        "store_covariance": "false", "type_dataset": "raw",
    },
}


def hp_space(algorithm: str) -> HPSpace:
    if algorithm not in _SPACES:
        raise ValueError(f"unknown algorithm '{algorithm}'; expected one of {list(ALGORITHMS)}")
    return HPSpace(algorithm=algorithm, dims=_SPACES[algorithm])


def default_config(space: HPSpace) -> HPConfig:
    return space.from_mapping(DEFAULTS[space.algorithm])
