import json
from pathlib import Path

import pytest

from core.errors import ConfigError
from core.study_config import load_study_config, parse_study_config

SAMPLE = Path(__file__).resolve().parent.parent / "configs" / "synthetic_study.json"


def minimal(**extra):
    raw = {"datasets": [{"id": "synth", "synthetic": {"n_rows": 300, "seed": 1},
                         "drifts": [{"drift": 1.0}]}]}
    raw.update(extra)
    return raw


def test_sample_config_loads():
    cfg = load_study_config(SAMPLE)
    assert cfg.seed == 7
    assert cfg.dataset("synth").release_tags == ["base", "drift-0", "drift-1"]
    assert len(cfg.algorithms) == 5
    assert cfg.tracegen.budget == 300
    assert cfg.evaluation.repeats == 5 and cfg.evaluation.compare_eod
    assert [(p.base, p.shifted) for p in cfg.shift_pairs] == [("base", "drift-0"), ("base", "drift-1")]


def test_defaults_and_generated_release_tags():
    cfg = parse_study_config(minimal())
    assert cfg.dataset("synth").release_tags == ["base", "drift-1"]
    assert cfg.target == "aod"
    assert cfg.evaluation.repeats == 10
    assert cfg.evaluation.train_fraction == 0.8
    assert cfg.tracegen.acc_degrade == 0.05
    assert cfg.surrogates.kinds == ("baseline", "mlp", "svr", "forest", "gbt")


def test_cli_overrides_win(tmp_path):
    path = tmp_path / "study.json"
    path.write_text(json.dumps(minimal(seed=3, jobs=2, out_dir="results")), encoding="utf-8")
    cfg = load_study_config(path)
    assert (cfg.seed, cfg.jobs, cfg.out_dir) == (3, 2, tmp_path / "results")
    cfg = load_study_config(path, seed=9, out_dir=tmp_path / "elsewhere", jobs=4)
    assert (cfg.seed, cfg.jobs, cfg.out_dir) == (9, 4, tmp_path / "elsewhere")
    assert cfg.tracegen.search.jobs == 4


def test_every_problem_is_reported_at_once():
    raw = minimal(algorithms=["decision_tree", "knn"], target="spd",
                  evaluation={"repeats": 1, "sigma": "median"},
                  surrogates={"kinds": ["forest"], "overrides": {"forest": {"n_trees": 3}}})
    with pytest.raises(ConfigError) as err:
        parse_study_config(raw)
    text = "\n".join(err.value.problems)
    for fragment in ("knn", "target", "evaluation.repeats", "evaluation.sigma", "n_trees"):
        assert fragment in text
    assert len(err.value.problems) == 5


def test_shift_pairs_must_name_declared_releases():
    raw = minimal(shift_pairs=[{"dataset": "synth", "base": "base", "shifted": "drift-3"},
                               {"dataset": "other", "base": "base", "shifted": "drift-1"}])
    with pytest.raises(ConfigError) as err:
        parse_study_config(raw)
    problems = err.value.problems
    assert any("drift-3" in p and "not declared" in p for p in problems)
    assert any("unknown dataset 'other'" in p for p in problems)


def test_budget_below_population():
    with pytest.raises(ConfigError, match="population"):
        parse_study_config(minimal(tracegen={"budget": 10, "population": 20}))


@pytest.mark.parametrize("tracegen, fragment", [
    ({"population": 20.5}, "tracegen.population"),
    ({"tournament": "3"}, "tracegen.tournament"),
    ({"strength_start": "high"}, "tracegen.strength_start"),
    ({"budget": 40.5}, "tracegen.budget"),
])
def test_fractional_or_mistyped_tracegen_values(tracegen, fragment):
    with pytest.raises(ConfigError) as err:
        parse_study_config(minimal(tracegen=tracegen))
    assert any(p.startswith(fragment) for p in err.value.problems)


@pytest.mark.parametrize("section", ["tracegen", "surrogates", "evaluation"])
def test_sections_must_be_objects(section):
    with pytest.raises(ConfigError) as err:
        parse_study_config(minimal(**{section: [1, 2]}))
    assert err.value.problems == [f"{section}: expected an object, got [1, 2]"]


def test_synthetic_sizes_must_be_integers():
    raw = minimal()
    raw["datasets"][0]["synthetic"]["n_rows"] = 300.5
    with pytest.raises(ConfigError, match=r"datasets\[0\].synthetic.n_rows"):
        parse_study_config(raw)


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_study_config(minimal(evalution={}))


def test_csv_dataset_paths_resolve_against_the_config(tmp_path):
    schema = {"columns": [{"name": "sex", "kind": "categorical", "levels": ["Male", "Female"]},
                          {"name": "income", "kind": "categorical", "levels": [">50K", "<=50K"]}],
              "label": "income", "favorable": [">50K"], "protected": "sex", "group1": ["Male"]}
    (tmp_path / "schema.json").write_text(json.dumps(schema), encoding="utf-8")
    (tmp_path / "2014.csv").write_text("sex,income\nMale,>50K\n", encoding="utf-8")
    raw = {"datasets": [{"id": "census", "schema": "schema.json",
                         "releases": {"2014": "2014.csv", "2015": "missing.csv"}}]}
    with pytest.raises(ConfigError, match="missing.csv"):
        parse_study_config(raw, base_dir=tmp_path)
    raw["datasets"][0]["releases"] = {"2014": "2014.csv"}
    cfg = parse_study_config(raw, base_dir=tmp_path)
    assert cfg.dataset("census").releases == (("2014", (tmp_path / "2014.csv").resolve()),)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_study_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_study_config(bad)
