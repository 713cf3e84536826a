import hashlib
import json
import math
import re
from pathlib import Path

import numpy as np

TAG_PATTERN = r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$"


def is_valid_tag(tag: str) -> bool:
    """
    Dataset ids, release tags and algorithm names end up in file names,
    so they are restricted to letters, digits, '_', '.' and '-'.
    """
    return isinstance(tag, str) and re.fullmatch(TAG_PATTERN, tag) is not None


def snake_to_title(name: str) -> str:
    """'decision_tree' -> 'Decision Tree'."""
    return " ".join(part.capitalize() for part in name.split("_"))


############### Seeds & hashing ###############

def derive_seed(base_seed: int, *names) -> int:
    """
    Derive a 32-bit seed from a base seed and a chain of names
    (stage name, dataset id, index, ...). Same inputs, same seed,
    independent of call order.
    """
    text = ":".join([str(int(base_seed))] + [str(n) for n in names])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


############### JSON helpers ###############

def to_jsonable(obj):
    """
    Recursively convert numpy scalars/arrays, tuples, paths and non-string
    dict keys into plain JSON types. Non-finite floats become None.
    """
    if isinstance(obj, dict):
        out = {}
        for key, value in obj.items():
            if not isinstance(key, str):
                key = ",".join(str(x) for x in key) if isinstance(key, tuple) else str(key)
            out[key] = to_jsonable(value)
        return out
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def dump_json(obj, path, indent: int = 2) -> None:
    """Write JSON deterministically (stable separators, trailing newline)."""
    text = json.dumps(to_jsonable(obj), indent=indent, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
