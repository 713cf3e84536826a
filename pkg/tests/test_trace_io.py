import json

import pytest

from algorithms.tracegen import SearchSettings, generate_trace
from core.errors import IncompatibleSpaceError, TraceFormatError
from utils.trace_io import FORMAT, export_csv, read_trace, trace_frame, write_trace


@pytest.fixture
def trace(small_dataset):
    return generate_trace("decision_tree", small_dataset, budget=20, seed=0,
                          settings=SearchSettings(population=10))


def rewrite(path, header=None, record=None):
    """Apply header(dict) / record(dict) edits to a trace file in place."""
    lines = path.read_text(encoding="utf-8").splitlines()
    head = json.loads(lines[0])
    if header:
        header(head)
    body = []
    for line in lines[1:]:
        rec = json.loads(line)
        if record:
            record(rec)
        body.append(json.dumps(rec))
    path.write_text("\n".join([json.dumps(head)] + body) + "\n", encoding="utf-8")


def test_write_then_read_is_lossless(trace, tmp_path):
    path = write_trace(trace, tmp_path / "t.jsonl")
    back = read_trace(path)
    assert back == trace


def test_file_layout(trace, tmp_path):
    path = write_trace(trace, tmp_path / "t.jsonl")
    lines = path.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    assert header["format"] == FORMAT
    assert header["space"]["algorithm"] == "decision_tree"
    assert len(lines) == len(trace.records) + 1
    assert set(json.loads(lines[1])["config"]) == set(trace.space.names)


def test_unknown_dimension_in_a_record(trace, tmp_path):
    path = write_trace(trace, tmp_path / "t.jsonl")
    rewrite(path, record=lambda r: r["config"].update({"n_neighbors": 3}))
    with pytest.raises(TraceFormatError, match="n_neighbors"):
        read_trace(path)


def test_unknown_dimension_in_the_space_snapshot(trace, tmp_path):
    path = write_trace(trace, tmp_path / "t.jsonl")
    rewrite(path, header=lambda h: h["space"]["dims"][0].update({"name": "depth"}))
    with pytest.raises(TraceFormatError, match="depth"):
        read_trace(path)


@pytest.mark.parametrize("corrupt", [
    lambda h: h["space"].pop("dims"),
    lambda h: h["space"]["dims"][0].pop("kind"),
    lambda h: h["space"]["dims"][0].update({"lo": 100.0}),
    lambda h: h.update({"space": "decision_tree"}),
])
def test_malformed_space_snapshot(trace, tmp_path, corrupt):
    path = write_trace(trace, tmp_path / "t.jsonl")
    rewrite(path, header=corrupt)
    with pytest.raises(TraceFormatError, match="malformed space snapshot"):
        read_trace(path)


def test_changed_space_definition_is_incompatible(trace, tmp_path):
    path = write_trace(trace, tmp_path / "t.jsonl")
    rewrite(path, header=lambda h: h["space"]["dims"][0].update({"hi": 32.0}))
    with pytest.raises(IncompatibleSpaceError):
        read_trace(path)


def test_header_without_records(trace, tmp_path):
    path = write_trace(trace, tmp_path / "t.jsonl")
    header = path.read_text(encoding="utf-8").splitlines()[0]
    path.write_text(header + "\n", encoding="utf-8")
    with pytest.raises(TraceFormatError, match="no records"):
        read_trace(path)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_metric_outside_unit_interval(trace, tmp_path):
    path = write_trace(trace, tmp_path / "t.jsonl")
    rewrite(path, record=lambda r: r.update({"aod": 1.5}))
    with pytest.raises(TraceFormatError, match="aod"):
        read_trace(path)


def test_write_needs_an_existing_directory(trace, tmp_path):
    with pytest.raises(FileNotFoundError):
        write_trace(trace, tmp_path / "missing" / "t.jsonl")


def test_csv_export(trace, tmp_path):
    frame = trace_frame(trace)
    assert list(frame.columns) == trace.space.names + ["aod", "eod", "accuracy"]
    assert len(frame) == len(trace.records)
    path = export_csv(trace, tmp_path / "t.csv")
    assert path.read_text(encoding="utf-8").splitlines()[0].startswith("max_depth,")
