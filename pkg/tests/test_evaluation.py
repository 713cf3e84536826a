import math

import numpy as np
import pytest

from algorithms.evaluation import (BenchmarkRow, EvalReport, MetricSummary, bucket_tallies,
                                   compare_targets, competitive_kinds, mark_best, r2, relative_rmse,
                                   rmse, run_benchmark, shift_eval, summarize)
from core.errors import EvaluationError, IncompatibleSpaceError, UndefinedMetricError

from conftest import FAST_OPTIONS, depth_step, make_trace


def cell(kind, mean, std, rel=None):
    return MetricSummary(kind=kind, repeats=10, r2_mean=mean, r2_std=std, rel_rmse_mean=rel)


def row_of(cells, algorithm="decision_tree", release="base"):
    return BenchmarkRow(algorithm=algorithm, dataset="synth", release=release, protected="group",
                        target="aod", cells={c.kind: c for c in cells})


############### point metrics ###############

def test_r2_examples():
    truth = [0.1, 0.5, 0.3, 0.9]
    assert r2(truth, truth) == 1.0
    assert r2(truth, [np.mean(truth)] * 4) == 0.0
    assert r2([0.0, 1.0], [1.0, 0.0]) == -3.0


def test_r2_of_the_test_mean_is_exactly_zero():
    rng = np.random.default_rng(0)
    for _ in range(50):
        truth = rng.uniform(size=int(rng.integers(2, 30)))
        assert abs(r2(truth, np.full_like(truth, truth.mean()))) <= 1e-12


@pytest.mark.parametrize("value", [0.2, 0.1, 1 / 3, 0.7, 0.0])
def test_r2_on_constant_truth_is_undefined(value):
    with pytest.raises(UndefinedMetricError):
        r2([value] * 3, [0.1, 0.2, 0.3])
    with pytest.raises(UndefinedMetricError):
        r2([value] * 7, [value] * 7)


def test_relative_rmse_examples():
    assert relative_rmse([0.2, 0.4], [0.2, 0.4]) == 0.0
    assert relative_rmse([0.2, 0.4], [0.3, 0.3]) == pytest.approx(1 / 3, abs=1e-12)
    with pytest.raises(UndefinedMetricError):
        relative_rmse([0.0, 0.0], [0.1, 0.0])


def test_relative_rmse_of_the_mean_predictor_is_the_coefficient_of_variation():
    truth = np.array([0.1, 0.2, 0.6, 0.3, 0.05])
    assert relative_rmse(truth, np.full(5, truth.mean())) == pytest.approx(
        truth.std() / truth.mean(), abs=1e-12)


def test_relative_rmse_is_scale_invariant():
    rng = np.random.default_rng(1)
    truth, pred = rng.uniform(0.1, 1, size=20), rng.uniform(0.1, 1, size=20)
    for c in (0.01, 3.0, 250.0):
        assert relative_rmse(truth * c, pred * c) == pytest.approx(relative_rmse(truth, pred), rel=1e-12)


def test_metrics_reject_mismatched_lengths():
    with pytest.raises(ValueError):
        rmse([0.1, 0.2], [0.1])
    with pytest.raises(ValueError):
        r2([], [])


############### summaries and marking ###############

def test_nv_rule():
    assert cell("forest", 0.0, 0.1).nv
    assert cell("forest", -0.4, 0.1).nv
    assert not cell("forest", 0.01, 0.1).nv
    undefined = summarize("svr", {"r2": [0.5, None], "rel_rmse": [0.2, 0.3]}, repeats=2)
    assert undefined.nv
    assert "r2 undefined in 1 of 2" in undefined.note
    assert undefined.rel_rmse_mean == pytest.approx(0.25)


def test_summary_uses_sample_std():
    s = summarize("gbt", {"r2": [0.7, 0.8, 0.9]}, repeats=3)
    assert s.r2_mean == pytest.approx(0.8)
    assert s.r2_std == pytest.approx(0.1)


def test_mark_best_on_a_census_row():
    cells = {c.kind: c for c in (cell("baseline", None, 0.0), cell("forest", 0.875, 0.018),
                                 cell("gbt", 0.863, 0.016), cell("mlp", 0.316, 0.057),
                                 cell("svr", 0.237, 0.034))}
    assert mark_best(cells) == {"forest", "gbt"}


def test_mark_best_edge_cases():
    assert mark_best({"mlp": cell("mlp", 0.3, 0.2)}) == {"mlp"}
    assert mark_best({"forest": cell("forest", 0.6, 0.0), "gbt": cell("gbt", 0.6, 0.0)}) == {"forest", "gbt"}
    assert mark_best({"svr": cell("svr", -0.1, 0.0)}) == set()
    # the baseline never qualifies
    assert mark_best({"baseline": cell("baseline", 0.9, 0.0), "svr": cell("svr", 0.2, 0.0)}) == {"svr"}


def test_mark_best_ignores_kind_order():
    rng = np.random.default_rng(2)
    for _ in range(100):
        kinds = ["forest", "gbt", "mlp", "svr"]
        cells = [cell(k, float(rng.uniform(-0.2, 1)), float(rng.uniform(0, 0.1))) for k in kinds]
        for sigma in ("best", "pooled"):
            order = rng.permutation(4)
            assert mark_best({cells[i].kind: cells[i] for i in order}, sigma) == \
                mark_best({c.kind: c for c in cells}, sigma)


def test_pooled_sigma_widens_the_band():
    cells = {"forest": cell("forest", 0.9, 0.01), "mlp": cell("mlp", 0.7, 0.3)}
    assert mark_best(cells, "best") == {"forest"}
    assert mark_best(cells, "pooled") == {"forest", "mlp"}
    with pytest.raises(ValueError):
        mark_best(cells, "median")


def test_competitive_kinds():
    cells = {"baseline": cell("baseline", -0.01, 0.0, rel=0.44),
             "forest": cell("forest", 0.9, 0.01, rel=0.1),
             "mlp": cell("mlp", 0.4, 0.05, rel=0.3),
             "svr": cell("svr", 0.6, 0.05, rel=0.5)}
    assert competitive_kinds(cells) == {"forest"}


def test_bucket_tallies_are_nested():
    rng = np.random.default_rng(3)
    rows = [row_of([cell(k, float(rng.uniform(-0.5, 1)), 0.0) for k in ("baseline", "forest", "gbt", "mlp")])
            for _ in range(30)]
    tallies = bucket_tallies(rows)
    overall = tallies["overall"]
    assert overall["cells"] == 90
    assert overall["gt_0.95"] <= overall["gt_0.8"] <= overall["gt_0.5"] <= overall["cells"]
    assert set(tallies["per_kind"]) == {"forest", "gbt", "mlp"}
    assert sum(b["gt_0.5"] for b in tallies["per_kind"].values()) == overall["gt_0.5"]


def test_compare_targets_verdicts():
    aod_rows = [row_of([cell("forest", 0.80, 0.02)], algorithm="svm"),
                row_of([cell("forest", 0.80, 0.02)], algorithm="decision_tree"),
                row_of([cell("forest", 0.80, 0.02)], algorithm="random_forest")]
    eod_rows = [row_of([cell("forest", 0.83, 0.02)], algorithm="svm"),
                row_of([cell("forest", 0.90, 0.02)], algorithm="decision_tree"),
                row_of([cell("forest", 0.50, 0.02)], algorithm="random_forest")]
    verdicts = {c["algorithm"]: c["verdict"] for c in compare_targets(aod_rows, eod_rows)}
    assert verdicts == {"svm": "similar", "decision_tree": "improved", "random_forest": "degraded"}


############### run_benchmark ###############

def test_forest_learns_a_step_in_one_dimension():
    trace = make_trace(depth_step, 500)
    row = run_benchmark(trace, ["baseline", "forest"], repeats=3, base_seed=0, options=FAST_OPTIONS)
    assert row.cells["forest"].r2_mean >= 0.95
    assert row.best == ("forest",)
    assert row.cells["baseline"].nv


def test_baseline_r2_is_near_zero_on_held_out_records():
    trace = make_trace(depth_step, 500, seed=1)
    row = run_benchmark(trace, ["baseline"], repeats=10, base_seed=4)
    assert abs(row.cells["baseline"].r2_mean) <= 0.05


def test_baseline_scores_match_a_manual_split():
    trace = make_trace(lambda m: m["max_depth"] / 100.0 + m["min_weight_fraction_leaf"] / 10.0, 12, seed=2)
    row = run_benchmark(trace, ["baseline"], repeats=2, base_seed=0)
    y = trace.targets("aod")
    for r in range(2):
        perm = np.random.default_rng(r).permutation(12)
        train, test = y[perm[:10]], y[perm[10:]]
        expected = 1 - np.sum((test - train.mean()) ** 2) / np.sum((test - test.mean()) ** 2)
        assert row.cells["baseline"].values["r2"][r] == pytest.approx(expected, abs=1e-12)


def test_benchmark_is_deterministic():
    trace = make_trace(depth_step, 60, seed=3, noise=0.02)
    kinds = ["baseline", "forest", "gbt", "mlp", "svr"]
    a = run_benchmark(trace, kinds, repeats=2, base_seed=9, options=FAST_OPTIONS)
    b = run_benchmark(trace, kinds, repeats=2, base_seed=9, options=FAST_OPTIONS)
    assert a.to_dict() == b.to_dict()


def test_benchmark_size_errors():
    with pytest.raises(EvaluationError, match="at least 10"):
        run_benchmark(make_trace(depth_step, 9), ["baseline"])
    with pytest.raises(EvaluationError, match="test"):
        run_benchmark(make_trace(depth_step, 10), ["baseline"], train_fraction=0.9)
    with pytest.raises(ValueError):
        run_benchmark(make_trace(depth_step, 20), [])


def test_eod_target_is_benchmarked():
    trace = make_trace(depth_step, 100)
    row = run_benchmark(trace, ["forest"], repeats=2, target="eod", options=FAST_OPTIONS)
    assert row.target == "eod"
    assert row.cells["forest"].repeats == 2


############### shift_eval ###############

def test_zero_shift_is_at_least_in_distribution():
    trace = make_trace(depth_step, 300, seed=5, noise=0.02)
    options = FAST_OPTIONS
    in_dist = run_benchmark(trace, ["forest"], repeats=3, base_seed=1, options=options)
    shifted = shift_eval(trace, trace, ["forest"], repeats=3, base_seed=1, options=options)
    assert shifted.cells["forest"].r2_mean >= in_dist.cells["forest"].r2_mean
    assert shifted.shifted_release == "base"


def test_shift_to_unrelated_targets_is_nv():
    base = make_trace(depth_step, 200, seed=6)
    noise = make_trace(lambda m: 0.5, 200, seed=7, release="drift-9", noise=0.3)
    row = shift_eval(base, noise, ["forest", "gbt", "mlp", "svr"], repeats=2, options=FAST_OPTIONS)
    assert all(c.nv for c in row.cells.values())
    assert row.best == ()


def test_shift_across_spaces_is_rejected():
    base = make_trace(depth_step, 50, algorithm="decision_tree")
    other = make_trace(depth_step, 50, algorithm="random_forest")
    with pytest.raises(IncompatibleSpaceError):
        shift_eval(base, other, ["baseline"], repeats=1)


def test_shift_eval_is_deterministic():
    base = make_trace(depth_step, 80, seed=8, noise=0.05)
    shifted = make_trace(depth_step, 40, seed=9, noise=0.05, release="drift-1")
    a = shift_eval(base, shifted, ["gbt"], repeats=2, base_seed=3, options=FAST_OPTIONS)
    b = shift_eval(base, shifted, ["gbt"], repeats=2, base_seed=3, options=FAST_OPTIONS)
    assert a.to_dict() == b.to_dict()


def test_report_serializes_rows_and_tallies():
    report = EvalReport(benchmark=[row_of([cell("forest", 0.96, 0.01), cell("mlp", 0.6, 0.1)])],
                        settings={"repeats": 10})
    back = EvalReport.from_dict(report.to_dict())
    assert back.to_dict() == report.to_dict()
    assert report.to_dict()["tallies"]["overall"]["gt_0.95"] == 1
    assert math.isclose(back.benchmark[0].cells["mlp"].r2_mean, 0.6)


############### reproductions ###############

@pytest.mark.slow
def test_tree_ensembles_learn_a_two_dimension_function():
    def target(m):
        return 0.1 + 0.5 * (m["max_depth"] >= 20) * (m["min_samples_leaf"] <= 10) + 0.002 * m["max_depth"]

    trace = make_trace(target, 1000, seed=11, noise=0.01)
    row = run_benchmark(trace, ["baseline", "forest", "gbt", "mlp", "svr"], repeats=10, base_seed=0)
    r2s = {k: c.r2_mean for k, c in row.cells.items()}
    assert r2s["forest"] >= 0.95 and r2s["gbt"] >= 0.95
    for tree_kind in ("forest", "gbt"):
        assert r2s[tree_kind] > max(r2s["mlp"] or -1.0, r2s["svr"] or -1.0)
    assert abs(r2s["baseline"]) <= 0.05
