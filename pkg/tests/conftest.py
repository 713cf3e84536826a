import numpy as np
import pytest

from algorithms.hp_space import hp_space
from algorithms.tracegen import FairnessRecord, FairnessTrace
from utils.datasets import CATEGORICAL, NUMERIC, ColumnSpec, SynthSpec, TabularDataset, synth_generate

# Small surrogate settings so the suite stays fast; the defaults are exercised in slow tests.
FAST_OPTIONS = {
    "mlp": {"hidden_layers": 2, "width": 8, "epochs": 5},
    "svr": {"max_iter": 2000},
    "forest": {"n_estimators": 10},
    "gbt": {"n_rounds": 20, "max_depth": 4},
}


def make_dataset(rows, labels, protected, columns=None, name="hand", release="base"):
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if columns is None:
        columns = tuple(ColumnSpec(f"x{j}", NUMERIC) for j in range(rows.shape[1]))
    return TabularDataset(name=name, release=release, rows=rows, labels=labels,
                          protected=protected, column_meta=columns,
                          metadata={"protected_attribute": "group"})


def make_trace(target_fn, n, algorithm="decision_tree", seed=0, release="base",
               dataset_id="synth", noise=0.0):
    """
    A trace over uniformly sampled configs whose AOD is target_fn(mapping),
    plus optional Gaussian noise, clipped to [0, 1]. EOD mirrors AOD.
    """
    space = hp_space(algorithm)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        config = space.sample(rng)
        value = target_fn(space.as_mapping(config))
        if noise:
            value += rng.normal(0.0, noise)
        value = float(np.clip(value, 0.0, 1.0))
        records.append(FairnessRecord(config=config, aod=value, eod=value, accuracy=0.8,
                                      degenerate=False, eval_seed=i))
    return FairnessTrace(dataset_id=dataset_id, release=release, algorithm=algorithm,
                         protected="group", space=space, records=tuple(records),
                         metadata={"budget": n, "seed": seed})


def depth_step(mapping):
    return 0.1 if mapping["max_depth"] < 10 else 0.4


@pytest.fixture
def small_dataset():
    return synth_generate(SynthSpec(n_rows=200, seed=3))


@pytest.fixture
def group_split_dataset():
    """
    One feature that is the protected group itself. Group 1 (20 rows) is
    mostly favorable, group 0 (80 rows) mostly not, so a tree either
    predicts a constant 0 (AOD 0) or splits on the group (AOD near 1).
    """
    group = np.r_[np.ones(20), np.zeros(80)]
    labels = np.r_[np.ones(18), np.zeros(2), np.ones(8), np.zeros(72)]
    columns = (ColumnSpec("group", CATEGORICAL, ("g0", "g1")),)
    return make_dataset(group, labels, group, columns=columns, name="groups")
