"""
Study configuration: one JSON document describing datasets (CSV releases or
synthetic specs with drifted releases), algorithms, tracegen, surrogate and
evaluation settings and the shift pairs to study.

load_study_config() gathers every problem it finds before raising a single
ConfigError, so a user sees the full list at once.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from algorithms.hp_space import ALGORITHMS
from algorithms.surrogates import KINDS, resolve_options
from algorithms.tracegen import SearchSettings
from core.errors import ConfigError
from utils.datasets import SynthSpec
from Utils import is_valid_tag, load_json

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {"out_dir", "seed", "target", "jobs", "datasets", "algorithms",
                  "tracegen", "surrogates", "evaluation", "shift_pairs"}
SYNTH_INT_FIELDS = {"n_rows", "n_numeric", "n_categorical", "seed", "n_levels"}


@dataclass(frozen=True)
class DriftRelease:
    release: str
    drift: float
    seed: int | None = None


@dataclass(frozen=True)
class DatasetConfig:
    id: str
    synthetic: SynthSpec | None = None
    drifts: tuple = ()
    schema_path: Path | None = None
    releases: tuple = ()        # ((release, csv path), ...) for CSV datasets

    @property
    def is_synthetic(self) -> bool:
        return self.synthetic is not None

    @property
    def release_tags(self) -> list:
        if self.is_synthetic:
            return [self.synthetic.release] + [d.release for d in self.drifts]
        return [r for r, _ in self.releases]


@dataclass(frozen=True)
class TracegenConfig:
    budget: int = 300
    acc_degrade: float = 0.05
    search: SearchSettings = field(default_factory=SearchSettings)


@dataclass(frozen=True)
class SurrogateConfig:
    kinds: tuple = KINDS
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvaluationConfig:
    repeats: int = 10
    train_fraction: float = 0.8
    sigma: str = "best"
    compare_eod: bool = False


@dataclass(frozen=True)
class ShiftPair:
    dataset: str
    base: str
    shifted: str


@dataclass(frozen=True)
class StudyConfig:
    datasets: tuple
    algorithms: tuple
    target: str = "aod"
    tracegen: TracegenConfig = field(default_factory=TracegenConfig)
    surrogates: SurrogateConfig = field(default_factory=SurrogateConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    shift_pairs: tuple = ()
    out_dir: Path = Path("out")
    seed: int = 0
    jobs: int = 1

    def dataset(self, dataset_id: str) -> DatasetConfig:
        for d in self.datasets:
            if d.id == dataset_id:
                return d
        raise KeyError(dataset_id)

    def snapshot(self) -> dict:
        """Plain-JSON view of the settings that determine artifact contents."""
        return {
            "seed": self.seed, "target": self.target, "algorithms": list(self.algorithms),
            "datasets": [{"id": d.id, "releases": d.release_tags,
                          "synthetic": d.synthetic.to_dict() if d.synthetic else None,
                          "drifts": [vars(x) for x in d.drifts]} for d in self.datasets],
            "tracegen": {"budget": self.tracegen.budget, "acc_degrade": self.tracegen.acc_degrade,
                         **self.tracegen.search.to_dict()},
            "surrogates": {"kinds": list(self.surrogates.kinds), "overrides": self.surrogates.overrides},
            "evaluation": vars(self.evaluation),
            "shift_pairs": [vars(p) for p in self.shift_pairs],
        }


############### Parsing ###############

def _int(value, name, problems, minimum=None):
    if (isinstance(value, bool) or not isinstance(value, (int, float))
            or not math.isfinite(value) or value != math.floor(value)):
        problems.append(f"{name}: expected an integer, got {value!r}")
        return None
    if minimum is not None and value < minimum:
        problems.append(f"{name}: must be >= {minimum}, got {value}")
        return None
    return int(value)


def _float(value, name, problems, lo=None, hi=None, open_interval=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{name}: expected a number, got {value!r}")
        return None
    value = float(value)
    below = lo is not None and (value <= lo if open_interval else value < lo)
    above = hi is not None and (value >= hi if open_interval else value > hi)
    if below or above:
        bracket = "()" if open_interval else "[]"
        problems.append(f"{name}: {value} outside {bracket[0]}{lo}, {hi}{bracket[1]}")
        return None
    return value


def _section(raw: dict, key: str, problems: list, where: str = "") -> dict:
    section = raw.get(key, {})
    if not isinstance(section, dict):
        name = f"{where}.{key}" if where else key
        problems.append(f"{name}: expected an object, got {section!r}")
        return {}
    return section


def _unknown_keys(section: dict, allowed: set, name: str, problems: list):
    extra = sorted(set(section) - allowed)
    if extra:
        problems.append(f"{name}: unknown keys {extra}")


def _parse_dataset(raw, i, base_dir: Path, problems) -> DatasetConfig | None:
    where = f"datasets[{i}]"
    if not isinstance(raw, dict):
        problems.append(f"{where}: expected an object")
        return None
    _unknown_keys(raw, {"id", "synthetic", "drifts", "schema", "releases"}, where, problems)
    ds_id = raw.get("id")
    if not is_valid_tag(ds_id):
        problems.append(f"{where}.id: {ds_id!r} is not a valid identifier")
        ds_id = None

    if "synthetic" in raw:
        if "releases" in raw or "schema" in raw:
            problems.append(f"{where}: a synthetic dataset takes no 'schema' or 'releases'")
        synthetic = _section(raw, "synthetic", problems, where)
        spec_fields = set(SynthSpec.__dataclass_fields__) - {"name"}
        _unknown_keys(synthetic, spec_fields, f"{where}.synthetic", problems)
        for key in SYNTH_INT_FIELDS & set(synthetic):
            if _int(synthetic[key], f"{where}.synthetic.{key}", problems, minimum=0) is None:
                return None
        try:
            spec = SynthSpec.from_dict({**synthetic, "name": ds_id or "synthetic"})
        except (ValueError, TypeError) as e:
            problems.append(f"{where}.synthetic: {e}")
            return None
        drifts = []
        raw_drifts = raw.get("drifts", [])
        if not isinstance(raw_drifts, list):
            problems.append(f"{where}.drifts: expected a list")
            raw_drifts = []
        for j, d in enumerate(raw_drifts):
            tag = d.get("release") if isinstance(d, dict) else None
            drift = _float(d.get("drift") if isinstance(d, dict) else None,
                           f"{where}.drifts[{j}].drift", problems, lo=0.0)
            if tag is None and drift is not None:
                tag = f"drift-{drift:g}"
            if not is_valid_tag(tag):
                problems.append(f"{where}.drifts[{j}].release: {tag!r} is not a valid identifier")
                continue
            seed = d.get("seed") if isinstance(d, dict) else None
            if seed is not None:
                seed = _int(seed, f"{where}.drifts[{j}].seed", problems, minimum=0)
            if drift is not None:
                drifts.append(DriftRelease(tag, drift, seed))
        cfg = DatasetConfig(id=ds_id or "", synthetic=spec, drifts=tuple(drifts))
    else:
        schema = raw.get("schema")
        if not isinstance(schema, str):
            problems.append(f"{where}.schema: required for CSV datasets")
            schema_path = None
        else:
            schema_path = (base_dir / schema).resolve()
            if not schema_path.exists():
                problems.append(f"{where}.schema: file not found: {schema_path}")
        releases = raw.get("releases")
        pairs = []
        if not isinstance(releases, dict) or not releases:
            problems.append(f"{where}.releases: expected a nonempty {{release: csv path}} object")
        else:
            for tag, rel_path in releases.items():
                if not is_valid_tag(tag):
                    problems.append(f"{where}.releases: {tag!r} is not a valid release tag")
                    continue
                p = (base_dir / str(rel_path)).resolve()
                if not p.exists():
                    problems.append(f"{where}.releases.{tag}: file not found: {p}")
                pairs.append((tag, p))
        cfg = DatasetConfig(id=ds_id or "", schema_path=schema_path, releases=tuple(pairs))

    tags = cfg.release_tags
    if len(set(tags)) != len(tags):
        problems.append(f"{where}: duplicated release tags {tags}")
    return cfg


def parse_study_config(raw: dict, base_dir=".", seed=None, out_dir=None, jobs=None) -> StudyConfig:
    """Validate a config document; CLI overrides win over file values."""
    problems = []
    base_dir = Path(base_dir)
    if not isinstance(raw, dict):
        raise ConfigError(["the configuration must be a JSON object"])
    _unknown_keys(raw, TOP_LEVEL_KEYS, "config", problems)

    # 1) datasets
    datasets = []
    raw_datasets = raw.get("datasets")
    if not isinstance(raw_datasets, list) or not raw_datasets:
        problems.append("datasets: at least one dataset is required")
    else:
        for i, d in enumerate(raw_datasets):
            cfg = _parse_dataset(d, i, base_dir, problems)
            if cfg is not None:
                datasets.append(cfg)
    ids = [d.id for d in datasets]
    if len(set(ids)) != len(ids):
        problems.append(f"datasets: duplicated ids {ids}")

    # 2) algorithms / target
    algorithms = raw.get("algorithms", list(ALGORITHMS))
    if not isinstance(algorithms, list) or not algorithms:
        problems.append("algorithms: expected a nonempty list")
        algorithms = []
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        problems.append(f"algorithms: unknown {unknown}; expected names from {list(ALGORITHMS)}")
    target = raw.get("target", "aod")
    if target not in ("aod", "eod"):
        problems.append(f"target: must be 'aod' or 'eod', got {target!r}")

    # 3) tracegen
    tg = _section(raw, "tracegen", problems)
    _unknown_keys(tg, {"budget", "acc_degrade", "population", "tournament", "strength_start",
                       "strength_end", "classifier_fraction", "rates_denominator"}, "tracegen", problems)
    defaults = SearchSettings()
    budget = _int(tg.get("budget", 300), "tracegen.budget", problems, minimum=1)
    acc_degrade = _float(tg.get("acc_degrade", 0.05), "tracegen.acc_degrade", problems, 0.0, 1.0)
    settings = {
        "population": _int(tg.get("population", defaults.population), "tracegen.population", problems, minimum=1),
        "tournament": _int(tg.get("tournament", defaults.tournament), "tracegen.tournament", problems, minimum=1),
    }
    for key in ("strength_start", "strength_end", "classifier_fraction"):
        settings[key] = _float(tg.get(key, getattr(defaults, key)), f"tracegen.{key}", problems)
    search = None
    if None not in settings.values():
        try:
            search = SearchSettings(**settings, rates_denominator=tg.get("rates_denominator",
                                                                        defaults.rates_denominator))
        except (ValueError, TypeError) as e:
            problems.append(f"tracegen: {e}")
    if search is not None and search.rates_denominator not in ("conditioned", "group"):
        problems.append(f"tracegen.rates_denominator: {search.rates_denominator!r} is not 'conditioned' or 'group'")
    if search is not None and budget is not None and budget < search.population:
        problems.append(f"tracegen.budget: {budget} is smaller than the population {search.population}")

    # 4) surrogates
    sg = _section(raw, "surrogates", problems)
    _unknown_keys(sg, {"kinds", "overrides"}, "surrogates", problems)
    kinds = sg.get("kinds", list(KINDS))
    bad_kinds = [k for k in kinds if k not in KINDS] if isinstance(kinds, list) else kinds
    if not isinstance(kinds, list) or not kinds or bad_kinds:
        problems.append(f"surrogates.kinds: expected a nonempty list of {list(KINDS)}, got {kinds!r}")
        kinds = [k for k in (kinds if isinstance(kinds, list) else []) if k in KINDS]
    overrides = sg.get("overrides", {})
    for kind, opts in (overrides.items() if isinstance(overrides, dict) else []):
        try:
            resolve_options(kind, opts)
        except (ValueError, TypeError) as e:
            problems.append(f"surrogates.overrides.{kind}: {e}")

    # 5) evaluation
    ev = _section(raw, "evaluation", problems)
    _unknown_keys(ev, {"repeats", "train_fraction", "sigma", "compare_eod"}, "evaluation", problems)
    repeats = _int(ev.get("repeats", 10), "evaluation.repeats", problems, minimum=2)
    train_fraction = _float(ev.get("train_fraction", 0.8), "evaluation.train_fraction", problems,
                            0.0, 1.0, open_interval=True)
    sigma = ev.get("sigma", "best")
    if sigma not in ("best", "pooled"):
        problems.append(f"evaluation.sigma: must be 'best' or 'pooled', got {sigma!r}")
    compare_eod = ev.get("compare_eod", False)
    if not isinstance(compare_eod, bool):
        problems.append("evaluation.compare_eod: expected true or false")

    # 6) shift pairs reference declared datasets / releases
    pairs = []
    raw_pairs = raw.get("shift_pairs", [])
    if not isinstance(raw_pairs, list):
        problems.append("shift_pairs: expected a list")
        raw_pairs = []
    for i, p in enumerate(raw_pairs):
        where = f"shift_pairs[{i}]"
        if not isinstance(p, dict) or not {"dataset", "base", "shifted"} <= set(p):
            problems.append(f"{where}: expected keys dataset, base, shifted")
            continue
        by_id = {d.id: d for d in datasets}
        if p["dataset"] not in by_id:
            problems.append(f"{where}: unknown dataset {p['dataset']!r}")
            continue
        tags = by_id[p["dataset"]].release_tags
        for role in ("base", "shifted"):
            if p[role] not in tags:
                problems.append(f"{where}.{role}: release {p[role]!r} is not declared for "
                                f"dataset {p['dataset']!r} (declared: {tags})")
        if p["base"] == p["shifted"]:
            problems.append(f"{where}: base and shifted releases must differ")
        pairs.append(ShiftPair(p["dataset"], p["base"], p["shifted"]))

    # 7) run-level settings, CLI overrides first
    seed_value = _int(seed if seed is not None else raw.get("seed", 0), "seed", problems, minimum=0)
    jobs_value = _int(jobs if jobs is not None else raw.get("jobs", 1), "jobs", problems, minimum=1)
    out_value = Path(out_dir) if out_dir is not None else (base_dir / raw.get("out_dir", "out"))

    if problems:
        raise ConfigError(problems)

    search = replace(search, jobs=jobs_value)
    return StudyConfig(
        datasets=tuple(datasets), algorithms=tuple(algorithms), target=target,
        tracegen=TracegenConfig(budget=budget, acc_degrade=acc_degrade, search=search),
        surrogates=SurrogateConfig(kinds=tuple(kinds), overrides=dict(overrides)),
        evaluation=EvaluationConfig(repeats=repeats, train_fraction=train_fraction,
                                    sigma=sigma, compare_eod=compare_eod),
        shift_pairs=tuple(pairs), out_dir=out_value, seed=seed_value, jobs=jobs_value)


def load_study_config(path, seed=None, out_dir=None, jobs=None) -> StudyConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    try:
        raw = load_json(path)
    except ValueError as e:
        raise ConfigError([f"{path}: not valid JSON ({e})"]) from e
    return parse_study_config(raw, base_dir=path.parent, seed=seed, out_dir=out_dir, jobs=jobs)
