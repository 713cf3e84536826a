"""
Evolutionary exploration of an algorithm's HP space that records the
fairness (AOD, EOD) and accuracy of every configuration it evaluates.

The search alternates between two objectives each generation, driving
the population towards the least and the most unfair configurations that
keep accuracy within `acc_degrade` of the default configuration.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from algorithms.fairness import (accuracy_from_predictions, aod, eod,
                                 group_rates_from_predictions)
from algorithms.hp_space import HPConfig, HPSpace, default_config, hp_space
from algorithms.trainers import predict, train
from core.errors import DatasetError, FairnessToolkitError, TrainingError
from utils.datasets import TabularDataset, split
from Utils import derive_seed

logger = logging.getLogger(__name__)

MIN_AOD = "min_aod"
MAX_AOD = "max_aod"


@dataclass(frozen=True)
class SearchSettings:
    population: int = 20
    tournament: int = 3
    strength_start: float = 0.3
    strength_end: float = 0.1
    classifier_fraction: float = 0.7
    rates_denominator: str = "conditioned"
    jobs: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.tournament < 1:
            raise ValueError("tournament size must be >= 1")
        for name in ("strength_start", "strength_end"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if not 0.0 < self.classifier_fraction < 1.0:
            raise ValueError("classifier_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        # jobs does not change results, so it is not part of the trace metadata
        return {"population": self.population, "tournament": self.tournament,
                "strength_start": self.strength_start, "strength_end": self.strength_end,
                "classifier_fraction": self.classifier_fraction,
                "rates_denominator": self.rates_denominator}


@dataclass(frozen=True)
class FairnessRecord:
    config: HPConfig
    aod: float
    eod: float
    accuracy: float
    degenerate: bool
    eval_seed: int
    feasible: bool = True


@dataclass(frozen=True)
class FairnessTrace:
    dataset_id: str
    release: str
    algorithm: str
    protected: str
    space: HPSpace
    records: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise ValueError("a fairness trace needs at least one record")

    def targets(self, target: str = "aod") -> np.ndarray:
        if target not in ("aod", "eod"):
            raise ValueError(f"target must be 'aod' or 'eod', got '{target}'")
        return np.array([getattr(r, target) for r in self.records], dtype=float)

    def configs(self) -> list:
        return [r.config for r in self.records]


############### Pareto archives ###############

class ParetoArchive:
    """
    Non-dominated (AOD, accuracy) points; accuracy is always maximized,
    AOD is minimized or maximized according to `orientation`.
    """

    def __init__(self, orientation: str):
        if orientation not in (MIN_AOD, MAX_AOD):
            raise ValueError(f"unknown orientation '{orientation}'")
        self.orientation = orientation
        self.members = []

    def _oriented(self, record: FairnessRecord):
        fair = record.aod if self.orientation == MIN_AOD else -record.aod
        return fair, -record.accuracy

    def dominates(self, a: FairnessRecord, b: FairnessRecord) -> bool:
        pa, pb = self._oriented(a), self._oriented(b)
        return pa[0] <= pb[0] and pa[1] <= pb[1] and pa != pb

    def add(self, record: FairnessRecord) -> bool:
        point = self._oriented(record)
        for m in self.members:
            if self._oriented(m) == point or self.dominates(m, record):
                return False
        self.members = [m for m in self.members if not self.dominates(record, m)]
        self.members.append(record)
        return True


@dataclass
class SearchState:
    archives: dict
    population: list
    rng: np.random.Generator
    evaluations: int = 0
    generation: int = 0


############### Variation ###############

def mutate(config: HPConfig, space: HPSpace, strength: float, rng: np.random.Generator) -> HPConfig:
    """
    Each numeric dim moves with probability `strength` by Gaussian noise of
    scale strength * (hi - lo), measured in log space for log dims, then is
    clamped (and rounded for integer dims). Each categorical dim is
    resampled uniformly with probability `strength`.
    """
    if not 0.0 < strength <= 1.0:
        raise ValueError(f"strength must lie in (0, 1], got {strength}")
    values = list(config.values)
    for i, dim in enumerate(space.dims):
        if rng.random() >= strength:
            continue
        if not dim.is_numeric:
            values[i] = dim.levels[int(rng.integers(len(dim.levels)))]
        elif dim.scale == "log":
            lo, hi = math.log(dim.lo), math.log(dim.hi)
            moved = math.log(values[i]) + rng.normal(0.0, strength * (hi - lo))
            values[i] = dim.clip(math.exp(min(max(moved, lo), hi)))
        else:
            values[i] = dim.clip(values[i] + rng.normal(0.0, strength * (dim.hi - dim.lo)))
    return HPConfig(tuple(values))


def _rank_key(record: FairnessRecord, objective: str):
    # feasible first, ordered by the objective; infeasible ones by accuracy
    if record.feasible:
        fair = record.aod if objective == MIN_AOD else -record.aod
        return (0, fair, -record.accuracy)
    return (1, -record.accuracy, 0.0)


def _tournament(pool: list, objective: str, size: int, rng) -> FairnessRecord:
    picks = rng.integers(len(pool), size=size)
    return min((pool[int(i)] for i in picks), key=lambda r: _rank_key(r, objective))


def _next_population(candidates: list, size: int) -> list:
    """Top half under min-AOD plus the best remaining under max-AOD."""
    half = size // 2
    by_min = sorted(range(len(candidates)), key=lambda i: _rank_key(candidates[i], MIN_AOD))
    by_max = sorted(range(len(candidates)), key=lambda i: _rank_key(candidates[i], MAX_AOD))
    chosen = by_min[:half]
    taken = set(chosen)
    for i in by_max:
        if len(chosen) >= size:
            break
        if i not in taken:
            chosen.append(i)
            taken.add(i)
    return [candidates[i] for i in chosen]


############### Evaluation ###############

def _evaluate(algorithm, config, clf_train, val, eval_seed, denominator):
    model = train(algorithm, config, clf_train, eval_seed)
    pred = predict(model, val.rows)
    rates = group_rates_from_predictions(pred, val.labels, val.protected, denominator)
    return aod(rates), eod(rates), accuracy_from_predictions(pred, val.labels), rates.degenerate


def _check_dataset(ds: TabularDataset, role: str) -> None:
    for name, arr in (("protected groups", ds.protected), ("label classes", ds.labels)):
        if np.unique(arr).size < 2:
            raise DatasetError(f"{role} split of '{ds.name}' ({ds.release}) lacks one of the {name}")


def generate_trace(algorithm: str, dataset: TabularDataset, budget: int,
                   acc_degrade: float = 0.05, seed: int = 0,
                   settings: SearchSettings | None = None) -> FairnessTrace:
    """
    Inputs: algorithm, dataset, evaluation budget, allowed relative accuracy
    loss w.r.t. the default config, and seed.
    Returns: a FairnessTrace with one record per successful evaluation;
    record 0 is always the default configuration.
    """
    settings = settings or SearchSettings()
    space = hp_space(algorithm)
    if budget < settings.population:
        raise ValueError(f"budget {budget} is smaller than the population size {settings.population}")
    if not 0.0 <= acc_degrade <= 1.0:
        raise ValueError(f"acc_degrade must lie in [0, 1], got {acc_degrade}")

    # 1) one classifier-train / validation split per seed
    _check_dataset(dataset, "full")
    clf_train, val = split(dataset, settings.classifier_fraction, derive_seed(seed, "split"))
    _check_dataset(clf_train, "classifier-train")
    _check_dataset(val, "validation")

    state = SearchState(archives={MIN_AOD: ParetoArchive(MIN_AOD), MAX_AOD: ParetoArchive(MAX_AOD)},
                        population=[], rng=np.random.default_rng(derive_seed(seed, "search")))
    records, skipped = [], []
    acc_floor = None

    def run_batch(configs):
        start = state.evaluations
        seeds = [derive_seed(seed, "eval", start + k) for k in range(len(configs))]

        def job(k):
            try:
                return _evaluate(algorithm, configs[k], clf_train, val, seeds[k],
                                 settings.rates_denominator)
            except (FairnessToolkitError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
                return e

        if settings.jobs > 1 and len(configs) > 1:
            with ThreadPoolExecutor(max_workers=settings.jobs) as pool:
                outcomes = list(pool.map(job, range(len(configs))))
        else:
            outcomes = [job(k) for k in range(len(configs))]

        # merged in candidate order, so parallel runs match sequential ones
        fresh = []
        for k, outcome in enumerate(outcomes):
            idx = start + k
            if isinstance(outcome, Exception):
                logger.debug("evaluation %d skipped: %s", idx, outcome)
                skipped.append({"index": idx, "error": f"{type(outcome).__name__}: {outcome}"})
                continue
            a, e, acc, degenerate = outcome
            feasible = True if acc_floor is None else acc >= acc_floor
            rec = FairnessRecord(configs[k], float(a), float(e), float(acc), bool(degenerate),
                                 seeds[k], feasible)
            records.append(rec)
            fresh.append(rec)
            if feasible:
                for archive in state.archives.values():
                    archive.add(rec)
        state.evaluations += len(configs)
        return fresh

    # 2) default config first; its accuracy sets the feasibility floor
    default = run_batch([default_config(space)])
    if not default:
        raise TrainingError(f"{algorithm}: the default configuration failed to train ({skipped[0]['error']})")
    acc_floor = (1.0 - acc_degrade) * default[0].accuracy

    # 3) initial population: default + uniform samples
    samples = [space.sample(state.rng) for _ in range(settings.population - 1)]
    state.population = default + run_batch(samples)

    # 4) generations alternate min-AOD / max-AOD
    while state.evaluations < budget:
        objective = MIN_AOD if state.generation % 2 == 0 else MAX_AOD
        pool = state.population + state.archives[objective].members
        progress = state.evaluations / budget
        strength = settings.strength_start + (settings.strength_end - settings.strength_start) * progress
        n_children = min(settings.population, budget - state.evaluations)
        children = [mutate(_tournament(pool, objective, settings.tournament, state.rng).config,
                           space, strength, state.rng)
                    for _ in range(n_children)]
        offspring = run_batch(children)
        state.population = _next_population(state.population + offspring, settings.population)
        state.generation += 1

    if not records:
        raise TrainingError(f"{algorithm}: every evaluation failed")
    if skipped:
        logger.warning("%s on %s/%s: %d of %d evaluations failed to train",
                       algorithm, dataset.name, dataset.release, len(skipped), budget)

    position = {id(r): i for i, r in enumerate(records)}
    metadata = {
        "budget": int(budget),
        "seed": int(seed),
        "acc_degrade": float(acc_degrade),
        "default_accuracy": default[0].accuracy,
        "accuracy_threshold": acc_floor,
        "search": settings.to_dict(),
        "generations": state.generation,
        "skipped": len(skipped),
        "diagnostics": skipped,
        "dataset_fingerprint": dataset.fingerprint(),
        "archives": {name: sorted(position[id(m)] for m in archive.members)
                     for name, archive in state.archives.items()},
    }
    logger.info("trace %s/%s/%s: %d records, %d generations",
                dataset.name, dataset.release, algorithm, len(records), state.generation)
    return FairnessTrace(
        dataset_id=dataset.name, release=dataset.release, algorithm=algorithm,
        protected=dataset.metadata.get("protected_attribute", "protected"),
        space=space, records=tuple(records), metadata=metadata)
