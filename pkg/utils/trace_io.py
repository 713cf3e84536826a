"""
Fairness traces on disk: JSON Lines, header first, one record per line.

Header: dataset_id, release, algorithm, protected, space snapshot, metadata.
Records: {"config": {dim: value}, "aod", "eod", "accuracy", "degenerate",
"eval_seed", "feasible"}. Files carry no timestamps so identical traces
serialize to identical bytes.
"""
import json
import logging
import math
from pathlib import Path

import pandas as pd

from algorithms.hp_space import HPSpace, hp_space
from algorithms.tracegen import FairnessRecord, FairnessTrace
from core.errors import InvalidConfigError, TraceFormatError
from Utils import to_jsonable

logger = logging.getLogger(__name__)

FORMAT = "fairness-trace/1"
HEADER_KEYS = ("dataset_id", "release", "algorithm", "protected", "space", "metadata")


def _dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), ensure_ascii=False, sort_keys=False, allow_nan=False)


def write_trace(trace: FairnessTrace, path) -> Path:
    path = Path(path)
    if not path.parent.exists():
        raise FileNotFoundError(f"directory does not exist: {path.parent}")
    names = trace.space.names
    lines = [_dumps({"format": FORMAT, "dataset_id": trace.dataset_id, "release": trace.release,
                     "algorithm": trace.algorithm, "protected": trace.protected,
                     "space": trace.space.to_dict(), "metadata": trace.metadata})]
    for r in trace.records:
        lines.append(_dumps({
            "config": dict(zip(names, r.config.values)),
            "aod": r.aod, "eod": r.eod, "accuracy": r.accuracy,
            "degenerate": r.degenerate, "eval_seed": r.eval_seed, "feasible": r.feasible,
        }))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("wrote %d records to %s", len(trace.records), path)
    return path


def read_trace(path) -> FairnessTrace:
    """
    Read a trace and check its space snapshot against the current
    definition for its algorithm (IncompatibleSpaceError on mismatch).
    """
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError(f"{path}: empty trace file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"{path}: header line is not JSON ({e})") from e
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise TraceFormatError(f"{path}: header lacks {missing}")

    try:
        snapshot = HPSpace.from_dict(header["space"])
        current = hp_space(snapshot.algorithm)
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise TraceFormatError(f"{path}: malformed space snapshot ({type(e).__name__}: {e})") from e

    unknown = [n for n in snapshot.names if n not in current.names]
    if unknown:
        raise TraceFormatError(f"{path}: unknown dimensions {unknown} for {snapshot.algorithm}")
    current.check_compatible(snapshot)

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            raw = json.loads(line)
            config = raw["config"]
            extra = set(config) - set(current.names)
            if extra:
                raise TraceFormatError(f"{path}:{lineno}: unknown dimensions {sorted(extra)}")
            rec = FairnessRecord(
                config=current.from_mapping(config),
                aod=float(raw["aod"]), eod=float(raw["eod"]), accuracy=float(raw["accuracy"]),
                degenerate=bool(raw.get("degenerate", False)),
                eval_seed=int(raw.get("eval_seed", 0)),
                feasible=bool(raw.get("feasible", True)))
        except (json.JSONDecodeError, KeyError, TypeError, InvalidConfigError) as e:
            raise TraceFormatError(f"{path}:{lineno}: malformed record ({e})") from e
        for name in ("aod", "eod", "accuracy"):
            value = getattr(rec, name)
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise TraceFormatError(f"{path}:{lineno}: {name}={value} outside [0, 1]")
        records.append(rec)
    if not records:
        raise TraceFormatError(f"{path}: trace holds no records")

    return FairnessTrace(dataset_id=header["dataset_id"], release=header["release"],
                         algorithm=header["algorithm"], protected=header["protected"],
                         space=current, records=tuple(records), metadata=header["metadata"])


def trace_frame(trace: FairnessTrace) -> pd.DataFrame:
    """One column per dimension plus aod, eod, accuracy."""
    rows = [dict(zip(trace.space.names, r.config.values), aod=r.aod, eod=r.eod, accuracy=r.accuracy)
            for r in trace.records]
    return pd.DataFrame(rows, columns=trace.space.names + ["aod", "eod", "accuracy"])


def export_csv(trace: FairnessTrace, path) -> Path:
    path = Path(path)
    trace_frame(trace).to_csv(path, index=False, encoding="utf-8")
    return path
