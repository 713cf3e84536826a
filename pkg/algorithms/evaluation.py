"""
Surrogate scoring: point metrics, the repeated hold-out benchmark, the
distribution-shift study, best-cell marking and threshold tallies.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from algorithms import surrogates
from algorithms.tracegen import FairnessTrace
from core.errors import EvaluationError, IncompatibleSpaceError, UndefinedMetricError
from Utils import derive_seed

logger = logging.getLogger(__name__)

MIN_RECORDS = 10
THRESHOLDS = (0.95, 0.8, 0.5)
METRICS = ("r2", "rel_rmse", "rmse", "mse")


############### Point metrics ###############

def _pair(truth, pred):
    t = np.asarray(truth, dtype=float)
    p = np.asarray(pred, dtype=float)
    if t.ndim != 1 or t.shape != p.shape or t.size == 0:
        raise ValueError(f"truth and pred must be equal-length nonempty vectors ({t.shape} vs {p.shape})")
    return t, p


def mse(truth, pred) -> float:
    t, p = _pair(truth, pred)
    return float(np.mean((p - t) ** 2))


def rmse(truth, pred) -> float:
    return math.sqrt(mse(truth, pred))


def r2(truth, pred) -> float:
    """1 - SS_res / SS_tot; constant truth raises UndefinedMetricError."""
    t, p = _pair(truth, pred)
    # t - t.mean() can be a few ulps off zero for constant t
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if np.ptp(t) == 0.0 or ss_tot == 0.0:
        raise UndefinedMetricError("R2 is undefined for constant truth values")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


def relative_rmse(truth, pred) -> float:
    """RMSE divided by the mean of the truth values."""
    t, p = _pair(truth, pred)
    mean = float(t.mean())
    if mean <= 0.0:
        raise UndefinedMetricError("relative RMSE is undefined when the truth mean is 0")
    return rmse(t, p) / mean


_METRIC_FUNCS = {"r2": r2, "rel_rmse": relative_rmse, "rmse": rmse, "mse": mse}


############### Summaries ###############

@dataclass(frozen=True)
class MetricSummary:
    """
    Mean / sample std over repeats for each metric. A metric that was
    undefined in some repeat has mean None and a note. nv is set exactly
    when the R2 mean is <= 0 or undefined.
    """
    kind: str
    repeats: int
    r2_mean: float | None = None
    r2_std: float = 0.0
    rel_rmse_mean: float | None = None
    rel_rmse_std: float = 0.0
    rmse_mean: float | None = None
    rmse_std: float = 0.0
    mse_mean: float | None = None
    mse_std: float = 0.0
    note: str | None = None
    values: dict = field(default_factory=dict)

    @property
    def nv(self) -> bool:
        return self.r2_mean is None or self.r2_mean <= 0.0

    def mean(self, metric: str):
        return getattr(self, f"{metric}_mean")

    def std(self, metric: str) -> float:
        return getattr(self, f"{metric}_std")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "repeats": self.repeats, "nv": self.nv, "note": self.note}
        for m in METRICS:
            d[m] = {"mean": self.mean(m), "std": self.std(m), "values": self.values.get(m, [])}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSummary":
        kwargs = {"kind": d["kind"], "repeats": int(d["repeats"]), "note": d.get("note")}
        values = {}
        for m in METRICS:
            if m in d:
                kwargs[f"{m}_mean"] = d[m]["mean"]
                kwargs[f"{m}_std"] = d[m].get("std", 0.0) or 0.0
                values[m] = d[m].get("values", [])
        return cls(values=values, **kwargs)


def summarize(kind: str, per_repeat: dict, repeats: int) -> MetricSummary:
    """per_repeat maps metric -> list of values (None where undefined)."""
    kwargs, values, notes = {}, {}, []
    for m in METRICS:
        vals = per_repeat.get(m, [])
        values[m] = list(vals)
        undefined = sum(v is None for v in vals)
        if undefined or not vals:
            kwargs[f"{m}_mean"], kwargs[f"{m}_std"] = None, 0.0
            if undefined:
                notes.append(f"{m} undefined in {undefined} of {len(vals)} repeats (constant or zero-mean test targets)")
            continue
        arr = np.asarray(vals, dtype=float)
        kwargs[f"{m}_mean"] = float(arr.mean())
        kwargs[f"{m}_std"] = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return MetricSummary(kind=kind, repeats=repeats, note="; ".join(notes) or None,
                         values=values, **kwargs)


@dataclass
class BenchmarkRow:
    algorithm: str
    dataset: str
    release: str
    protected: str
    target: str
    cells: dict
    shifted_release: str | None = None
    best: tuple = ()
    competitive: tuple = ()
    timings: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple:
        return (self.algorithm, self.dataset, self.release, self.protected, self.shifted_release)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm, "dataset": self.dataset, "release": self.release,
            "protected": self.protected, "target": self.target,
            "shifted_release": self.shifted_release,
            "cells": {k: c.to_dict() for k, c in self.cells.items()},
            "best": list(self.best), "competitive": list(self.competitive),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkRow":
        return cls(algorithm=d["algorithm"], dataset=d["dataset"], release=d["release"],
                   protected=d["protected"], target=d.get("target", "aod"),
                   cells={k: MetricSummary.from_dict(c) for k, c in d["cells"].items()},
                   shifted_release=d.get("shifted_release"),
                   best=tuple(d.get("best", ())), competitive=tuple(d.get("competitive", ())))


############### Best marking / flags ###############

def mark_best(cells: dict, sigma: str = "best", exclude=("baseline",)) -> set:
    """
    The kind with the highest mean R2 plus every kind whose mean lies within
    two standard deviations of it. sigma="best" uses the best cell's std,
    "pooled" the root-mean variance of the candidate cells. NV cells and
    `exclude` kinds never qualify.
    """
    if sigma not in ("best", "pooled"):
        raise ValueError(f"sigma must be 'best' or 'pooled', got '{sigma}'")
    candidates = {k: c for k, c in cells.items() if k not in exclude and not c.nv}
    if not candidates:
        return set()
    best_mean = max(c.r2_mean for c in candidates.values())
    if sigma == "best":
        # ties on the best mean: take the widest std so the result is order-free
        s = max(c.r2_std for c in candidates.values() if c.r2_mean == best_mean)
    else:
        s = math.sqrt(float(np.mean([c.r2_std ** 2 for c in candidates.values()])))
    return {k for k, c in candidates.items() if c.r2_mean >= best_mean - 2.0 * s}


def competitive_kinds(cells: dict, baseline: str = "baseline") -> set:
    """Kinds beating the baseline's mean relative RMSE with mean R2 above 0.5."""
    ref = cells.get(baseline)
    if ref is None or ref.rel_rmse_mean is None:
        return set()
    out = set()
    for k, c in cells.items():
        if k == baseline or c.rel_rmse_mean is None or c.r2_mean is None:
            continue
        if c.rel_rmse_mean < ref.rel_rmse_mean and c.r2_mean > 0.5:
            out.add(k)
    return out


def bucket_tallies(rows, exclude=("baseline",)) -> dict:
    """Counts of cells with mean R2 above each threshold, overall and per kind."""

    def empty():
        return {"cells": 0, **{f"gt_{t}": 0 for t in THRESHOLDS}}

    overall, per_kind = empty(), {}
    for row in rows:
        for kind, cell in row.cells.items():
            if kind in exclude:
                continue
            for bucket in (overall, per_kind.setdefault(kind, empty())):
                bucket["cells"] += 1
                if cell.r2_mean is None:
                    continue
                for t in THRESHOLDS:
                    if cell.r2_mean > t:
                        bucket[f"gt_{t}"] += 1
    for bucket in [overall] + list(per_kind.values()):
        for t in THRESHOLDS:
            bucket[f"pct_gt_{t}"] = 100.0 * bucket[f"gt_{t}"] / bucket["cells"] if bucket["cells"] else 0.0
    return {"overall": overall, "per_kind": dict(sorted(per_kind.items()))}


def _finish_row(row: BenchmarkRow, sigma: str) -> BenchmarkRow:
    row.best = tuple(sorted(mark_best(row.cells, sigma)))
    row.competitive = tuple(sorted(competitive_kinds(row.cells)))
    return row


############### Protocols ###############

def _score(kind, X_tr, y_tr, X_te, y_te, seed, space_tag, options):
    started = time.perf_counter()
    model = surrogates.fit(kind, X_tr, y_tr, seed, space_tag, options)
    elapsed = time.perf_counter() - started
    pred = surrogates.predict(model, X_te, space_tag)
    scores = {}
    for m, func in _METRIC_FUNCS.items():
        try:
            scores[m] = func(y_te, pred)
        except UndefinedMetricError:
            scores[m] = None
    return scores, elapsed


def _check_kinds(kinds, repeats):
    if not kinds:
        raise ValueError("kinds must be nonempty")
    for k in kinds:
        surrogates.resolve_options(k)
    if repeats < 1:
        raise ValueError("repeats must be >= 1")


def _collect(kinds, repeats, split_fn, X_tr_all, y_tr_all, X_te_all, y_te_all,
             base_seed, space_tag, options):
    per_kind = {k: {m: [] for m in METRICS} for k in kinds}
    timings = {k: 0.0 for k in kinds}
    for r in range(repeats):
        tr, te = split_fn(r)
        for kind in kinds:
            # surrogate fitting is re-seeded per repeat as well as the split
            seed = derive_seed(base_seed, "fit", kind, r)
            scores, elapsed = _score(kind, X_tr_all[tr], y_tr_all[tr], X_te_all[te], y_te_all[te],
                                     seed, space_tag, (options or {}).get(kind))
            for m, v in scores.items():
                per_kind[kind][m].append(v)
            timings[kind] += elapsed
    return {k: summarize(k, per_kind[k], repeats) for k in kinds}, timings


def run_benchmark(trace: FairnessTrace, kinds, repeats: int = 10, train_fraction: float = 0.8,
                  target: str = "aod", base_seed: int = 0, options: dict | None = None,
                  sigma: str = "best") -> BenchmarkRow:
    """
    Inputs: a trace with >= 10 records, surrogate kinds, repeat count,
    train fraction, target metric and base seed.
    Returns: a BenchmarkRow with one MetricSummary per kind. Repeat r splits
    the records with seed base_seed + r.
    """
    _check_kinds(kinds, repeats)
    n = len(trace.records)
    if n < MIN_RECORDS:
        raise EvaluationError(f"trace has {n} records; at least {MIN_RECORDS} are needed")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    k = math.ceil(n * train_fraction - 1e-9)
    if n - k < 2:
        raise EvaluationError(f"{n} records at train_fraction {train_fraction} leave {n - k} test "
                              f"records; increase the trace size")
    X = surrogates.encode_many(trace.configs(), trace.space)
    y = trace.targets(target)

    def split_fn(r):
        perm = np.random.default_rng(base_seed + r).permutation(n)
        return perm[:k], perm[k:]

    cells, timings = _collect(kinds, repeats, split_fn, X, y, X, y, base_seed,
                              trace.space.version_tag, options)
    row = BenchmarkRow(algorithm=trace.algorithm, dataset=trace.dataset_id, release=trace.release,
                       protected=trace.protected, target=target, cells=cells, timings=timings)
    logger.info("benchmark %s/%s/%s (%s): %s", trace.dataset_id, trace.release, trace.algorithm, target,
                ", ".join(f"{k}={_fmt(c.r2_mean)}" for k, c in cells.items()))
    return _finish_row(row, sigma)


def shift_eval(trace_base: FairnessTrace, trace_shifted: FairnessTrace, kinds, repeats: int = 10,
               base_seed: int = 0, target: str = "aod", train_fraction: float = 0.8,
               options: dict | None = None, sigma: str = "best") -> BenchmarkRow:
    """
    Fit on a seeded train_fraction subsample of the base trace, score on the
    whole shifted trace, once per repeat.
    """
    _check_kinds(kinds, repeats)
    if trace_base.space.version_tag != trace_shifted.space.version_tag:
        raise IncompatibleSpaceError(
            f"base trace uses {trace_base.space.version_tag}, shifted trace {trace_shifted.space.version_tag}")
    if trace_base.space.to_dict() != trace_shifted.space.to_dict():
        raise IncompatibleSpaceError("base and shifted traces carry different space snapshots")
    if trace_base.protected != trace_shifted.protected:
        raise EvaluationError(
            f"protected attributes differ: '{trace_base.protected}' vs '{trace_shifted.protected}'")
    if trace_base.release == trace_shifted.release:
        logger.warning("shift_eval: both traces come from release '%s'", trace_base.release)
    n_base, n_shift = len(trace_base.records), len(trace_shifted.records)
    if n_base < MIN_RECORDS:
        raise EvaluationError(f"base trace has {n_base} records; at least {MIN_RECORDS} are needed")
    if n_shift < 2:
        raise EvaluationError(f"shifted trace has {n_shift} records; at least 2 are needed")
    k = math.ceil(n_base * train_fraction - 1e-9)

    X_base = surrogates.encode_many(trace_base.configs(), trace_base.space)
    y_base = trace_base.targets(target)
    X_shift = surrogates.encode_many(trace_shifted.configs(), trace_shifted.space)
    y_shift = trace_shifted.targets(target)
    everything = np.arange(n_shift)

    def split_fn(r):
        perm = np.random.default_rng(base_seed + r).permutation(n_base)
        return np.sort(perm[:k]), everything

    cells, timings = _collect(kinds, repeats, split_fn, X_base, y_base, X_shift, y_shift,
                              base_seed, trace_base.space.version_tag, options)
    row = BenchmarkRow(algorithm=trace_base.algorithm, dataset=trace_base.dataset_id,
                       release=trace_base.release, protected=trace_base.protected, target=target,
                       cells=cells, shifted_release=trace_shifted.release, timings=timings)
    logger.info("shift %s -> %s (%s): %s", trace_base.release, trace_shifted.release, trace_base.algorithm,
                ", ".join(f"{k}={_fmt(c.r2_mean)}" for k, c in cells.items()))
    return _finish_row(row, sigma)


def compare_targets(aod_rows, eod_rows, kind: str = "forest") -> list:
    """
    Pair AOD and EOD rows by key and label the EOD result 'similar' when its
    mean R2 is within two standard deviations (of the AOD cell) of the AOD
    result, else 'improved' or 'degraded'.
    """
    eod_by_key = {r.key: r for r in eod_rows}
    out = []
    for row in aod_rows:
        other = eod_by_key.get(row.key)
        if other is None or kind not in row.cells or kind not in other.cells:
            continue
        a, e = row.cells[kind], other.cells[kind]
        if a.r2_mean is None or e.r2_mean is None:
            verdict = "undefined"
        elif abs(e.r2_mean - a.r2_mean) <= 2.0 * a.r2_std:
            verdict = "similar"
        else:
            verdict = "improved" if e.r2_mean > a.r2_mean else "degraded"
        out.append({"algorithm": row.algorithm, "dataset": row.dataset, "release": row.release,
                    "protected": row.protected, "kind": kind,
                    "aod_r2": a.r2_mean, "aod_std": a.r2_std,
                    "eod_r2": e.r2_mean, "eod_std": e.r2_std, "verdict": verdict})
    return out


def _fmt(value) -> str:
    return "NV" if value is None else f"{value:.3f}"


############### Report container ###############

@dataclass
class EvalReport:
    benchmark: list
    shift: list = field(default_factory=list)
    comparisons: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def tallies(self) -> dict:
        return bucket_tallies(self.benchmark)

    def to_dict(self) -> dict:
        return {
            "format": "eval-report/1",
            "settings": self.settings,
            "benchmark": [r.to_dict() for r in self.benchmark],
            "shift": [r.to_dict() for r in self.shift],
            "tallies": self.tallies(),
            "shift_tallies": bucket_tallies(self.shift),
            "comparisons": self.comparisons,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(benchmark=[BenchmarkRow.from_dict(r) for r in d.get("benchmark", [])],
                   shift=[BenchmarkRow.from_dict(r) for r in d.get("shift", [])],
                   comparisons=list(d.get("comparisons", [])),
                   settings=dict(d.get("settings", {})))
