"""
Study execution. Stages form a small dependency graph:

    trace -> fit
    trace -> eval -> report
    trace -> shift -> report

`run` executes the whole graph in topological order; each subcommand
executes one stage against the files earlier stages left in the output
directory. All randomness derives from the study seed by name.

Only traces are cached: `--force` regenerates them, and every stage after
trace recomputes from whatever traces it finds.
"""
import dataclasses
import logging
import time
from pathlib import Path

import networkx as nx

from algorithms import surrogates
from algorithms.evaluation import EvalReport, compare_targets, run_benchmark, shift_eval
from algorithms.tracegen import generate_trace
from core.errors import StageInputError, TraceFormatError
from core.manifest import Manifest
from core.study_config import StudyConfig
from utils.datasets import DatasetSchema, load_csv, synth_generate, synth_shift
from utils.report import render_from_json
from utils.trace_io import read_trace, write_trace
from Utils import derive_seed, dump_json, load_json

logger = logging.getLogger(__name__)

STAGE_RANK = {"trace": 0, "fit": 1, "eval": 2, "shift": 3, "report": 4}
REPORT_JSON = Path("reports") / "eval_report.json"
REPORT_MD = Path("reports") / "eval_report.md"
TIMINGS_NAME = "timings.json"


def stage_graph() -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_edges_from([("trace", "fit"), ("trace", "eval"), ("trace", "shift"),
                      ("eval", "report"), ("shift", "report")])
    return g


def stage_order(graph: nx.DiGraph | None = None) -> list:
    graph = graph or stage_graph()
    return list(nx.lexicographical_topological_sort(graph, key=STAGE_RANK.get))


def trace_name(ds_id: str, release: str, algorithm: str) -> str:
    return f"{ds_id}_{release}_{algorithm}.jsonl"


def surrogate_name(ds_id: str, release: str, algorithm: str, kind: str) -> str:
    return f"{ds_id}_{release}_{algorithm}_{kind}.json"


class StudyPipeline:
    def __init__(self, config: StudyConfig, force: bool = False):
        self.config = config
        self.out = Path(config.out_dir)
        self.force = force
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest.load_or_new(self.out)
        self.manifest.config = config.snapshot()
        self.timings = {}
        self._datasets = {}

    ############### helpers ###############

    @property
    def trace_dir(self) -> Path:
        return self.out / "traces"

    @property
    def surrogate_dir(self) -> Path:
        return self.out / "surrogates"

    def trace_jobs(self) -> list:
        return [(d.id, rel, alg) for d in self.config.datasets for rel in d.release_tags
                for alg in self.config.algorithms]

    def dataset(self, ds_id: str, release: str):
        key = (ds_id, release)
        if key in self._datasets:
            return self._datasets[key]
        cfg = self.config.dataset(ds_id)
        if cfg.is_synthetic:
            base = synth_generate(cfg.synthetic)
            if release == cfg.synthetic.release:
                ds = base
            else:
                drift = next(d for d in cfg.drifts if d.release == release)
                seed = drift.seed if drift.seed is not None else derive_seed(self.config.seed, "shift", ds_id, release)
                ds = synth_shift(base, drift.drift, seed)
                ds = dataclasses.replace(ds, release=release)
        else:
            schema = DatasetSchema.from_json(cfg.schema_path)
            ds = load_csv(dict(cfg.releases)[release], schema, name=ds_id, release=release)
        self._datasets[key] = ds
        return ds

    def _fail(self, stage: str, job: str, error: Exception) -> None:
        logger.exception("%s failed for %s: %s", stage, job, error)
        self.manifest.failures.append({"stage": stage, "job": job,
                                       "error": f"{type(error).__name__}: {error}"})

    def _require(self, path: Path, stage: str) -> Path:
        if not path.exists():
            raise StageInputError(path, stage)
        return path

    ############### stages ###############

    def stage_trace(self) -> None:
        self.trace_dir.mkdir(parents=True, exist_ok=True)
        tg = self.config.tracegen
        for ds_id, release, alg in self.trace_jobs():
            job = f"{ds_id}/{release}/{alg}"
            path = self.trace_dir / trace_name(ds_id, release, alg)
            seed = derive_seed(self.config.seed, "trace", ds_id, release, alg)
            self.manifest.seeds[f"trace:{job}"] = seed
            try:
                ds = self.dataset(ds_id, release)
                expected = {"budget": tg.budget, "seed": seed, "acc_degrade": tg.acc_degrade,
                            "search": tg.search.to_dict(), "dataset_fingerprint": ds.fingerprint()}
                if not self.force and self._reusable(path, expected):
                    logger.info("trace %s: reusing %s", job, path.name)
                    self.manifest.cache_hits.append(self.manifest.relpath(path))
                    continue
                trace = generate_trace(alg, ds, tg.budget, tg.acc_degrade, seed, tg.search)
                write_trace(trace, path)
                self.manifest.record(path, "trace")
            except Exception as e:
                self._fail("trace", job, e)

    def _reusable(self, path: Path, expected: dict) -> bool:
        if not path.exists():
            return False
        if not self.manifest.verify(path):
            logger.warning("%s: not in the manifest or hash changed, regenerating", path.name)
            return False
        try:
            meta = read_trace(path).metadata
        except Exception as e:
            logger.warning("%s: unreadable (%s), regenerating", path.name, e)
            return False
        return all(meta.get(k) == v for k, v in expected.items())

    def _load_trace(self, ds_id, release, alg, stage):
        return read_trace(self._require(self.trace_dir / trace_name(ds_id, release, alg), stage))

    def stage_fit(self) -> None:
        self.surrogate_dir.mkdir(parents=True, exist_ok=True)
        overrides = self.config.surrogates.overrides
        for ds_id, release, alg in self.trace_jobs():
            try:
                trace = self._load_trace(ds_id, release, alg, "fit")
            except (StageInputError, TraceFormatError) as e:
                self._fail("fit", f"{ds_id}/{release}/{alg}", e)
                continue
            for kind in self.config.surrogates.kinds:
                job = f"{ds_id}/{release}/{alg}/{kind}"
                seed = derive_seed(self.config.seed, "fit", ds_id, release, alg, kind)
                self.manifest.seeds[f"fit:{job}"] = seed
                try:
                    started = time.perf_counter()
                    model = surrogates.fit_configs(kind, trace.configs(), trace.targets(self.config.target),
                                                   trace.space, seed, overrides.get(kind))
                    self.timings[f"fit:{job}"] = time.perf_counter() - started
                    path = self.surrogate_dir / surrogate_name(ds_id, release, alg, kind)
                    surrogates.save(model, path)
                    self.manifest.record(path, "fit")
                except Exception as e:
                    self._fail("fit", job, e)

    def _report(self) -> EvalReport:
        path = self.out / REPORT_JSON
        if path.exists():
            return EvalReport.from_dict(load_json(path))
        return EvalReport(benchmark=[])

    def _write_report(self, report: EvalReport, stage: str) -> None:
        ev = self.config.evaluation
        report.settings = {"target": self.config.target, "repeats": ev.repeats,
                           "train_fraction": ev.train_fraction, "sigma": ev.sigma,
                           "kinds": list(self.config.surrogates.kinds), "seed": self.config.seed}
        path = self.out / REPORT_JSON
        path.parent.mkdir(parents=True, exist_ok=True)
        dump_json(report.to_dict(), path)
        self.manifest.record(path, stage)

    def stage_eval(self) -> None:
        ev = self.config.evaluation
        kinds = list(self.config.surrogates.kinds)
        overrides = self.config.surrogates.overrides
        rows, eod_rows = [], []
        for ds_id, release, alg in self.trace_jobs():
            job = f"{ds_id}/{release}/{alg}"
            seed = derive_seed(self.config.seed, "eval", ds_id, release, alg)
            self.manifest.seeds[f"eval:{job}"] = seed
            try:
                trace = self._load_trace(ds_id, release, alg, "eval")
                row = run_benchmark(trace, kinds, ev.repeats, ev.train_fraction, self.config.target,
                                    seed, overrides, ev.sigma)
                rows.append(row)
                self._record_timings("eval", job, row.timings)
                if ev.compare_eod and self.config.target == "aod":
                    eod_rows.append(run_benchmark(trace, ["forest"], ev.repeats, ev.train_fraction,
                                                  "eod", seed, overrides, ev.sigma))
            except Exception as e:
                self._fail("eval", job, e)
        report = self._report()
        report.benchmark = rows
        report.comparisons = compare_targets(rows, eod_rows, "forest") if eod_rows else []
        self._write_report(report, "eval")

    def stage_shift(self) -> None:
        ev = self.config.evaluation
        kinds = list(self.config.surrogates.kinds)
        rows = []
        for pair in self.config.shift_pairs:
            for alg in self.config.algorithms:
                job = f"{pair.dataset}/{pair.base}->{pair.shifted}/{alg}"
                seed = derive_seed(self.config.seed, "shift-eval", pair.dataset, pair.base, pair.shifted, alg)
                self.manifest.seeds[f"shift:{job}"] = seed
                try:
                    base = self._load_trace(pair.dataset, pair.base, alg, "shift")
                    shifted = self._load_trace(pair.dataset, pair.shifted, alg, "shift")
                    row = shift_eval(base, shifted, kinds, ev.repeats, seed, self.config.target,
                                     ev.train_fraction, self.config.surrogates.overrides, ev.sigma)
                    rows.append(row)
                    self._record_timings("shift", job, row.timings)
                except Exception as e:
                    self._fail("shift", job, e)
        report = self._report()
        report.shift = rows
        self._write_report(report, "shift")

    def stage_report(self) -> None:
        src = self._require(self.out / REPORT_JSON, "report")
        md = render_from_json(src, self.out / REPORT_MD)
        self.manifest.record(src, "report")
        self.manifest.record(md, "report")

    def _record_timings(self, stage, job, timings: dict) -> None:
        for kind, seconds in timings.items():
            self.timings[f"{stage}:{job}/{kind}"] = seconds

    ############### entry points ###############

    def execute(self, stages) -> int:
        """Run `stages` in graph order; returns 0, or 3 when any job failed."""
        runners = {"trace": self.stage_trace, "fit": self.stage_fit, "eval": self.stage_eval,
                   "shift": self.stage_shift, "report": self.stage_report}
        wanted = set(stages)
        status = 0
        for stage in stage_order():
            if stage not in wanted:
                continue
            logger.info("stage %s: start", stage)
            started = time.perf_counter()
            try:
                runners[stage]()
            except (StageInputError, TraceFormatError) as e:
                self._fail(stage, stage, e)
                status = 3
                break
            self.timings[f"stage:{stage}"] = time.perf_counter() - started
            logger.info("stage %s: done in %.1fs", stage, self.timings[f"stage:{stage}"])
        if self.manifest.failures:
            status = 3
        self.manifest.save()
        dump_json(dict(sorted(self.timings.items())), self.out / TIMINGS_NAME)
        return status

    def run(self) -> int:
        return self.execute(stage_order())


def eval_single_trace(trace_path, out_dir, kinds, repeats: int, train_fraction: float,
                      target: str, seed: int, overrides=None, sigma: str = "best") -> Path:
    """Benchmark one trace file and write the JSON and Markdown report under out_dir/reports."""
    trace_path = Path(trace_path)
    if not trace_path.exists():
        raise StageInputError(trace_path, "eval")
    trace = read_trace(trace_path)
    row = run_benchmark(trace, list(kinds), repeats, train_fraction, target, seed, overrides or {}, sigma)
    report = EvalReport(benchmark=[row], settings={"target": target, "repeats": repeats,
                                                   "train_fraction": train_fraction, "sigma": sigma,
                                                   "kinds": list(kinds), "seed": seed})
    out = Path(out_dir) / REPORT_JSON
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_json(report.to_dict(), out)
    render_from_json(out, Path(out_dir) / REPORT_MD)
    return out
