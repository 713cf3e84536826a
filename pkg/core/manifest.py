"""
Run manifest: every artifact written under the output directory with its
sha256, the seeds used per job, versions, cache hits and failures.
Paths are stored relative to the output directory.
"""
import logging
from dataclasses import dataclass, field
from importlib import metadata as importlib_metadata
from pathlib import Path

from algorithms.hp_space import ALGORITHMS, hp_space
from algorithms.surrogates import FORMAT as SURROGATE_FORMAT
from utils.trace_io import FORMAT as TRACE_FORMAT
from Utils import dump_json, file_sha256, load_json

logger = logging.getLogger(__name__)

TOOLKIT_VERSION = "1.0.0"
MANIFEST_NAME = "manifest.json"
LIBRARIES = ("numpy", "pandas", "networkx", "scipy")


def library_versions() -> dict:
    out = {}
    for name in LIBRARIES:
        try:
            out[name] = importlib_metadata.version(name)
        except importlib_metadata.PackageNotFoundError:
            out[name] = None
    return out


@dataclass
class Manifest:
    out_dir: Path
    artifacts: dict = field(default_factory=dict)   # relpath -> {"sha256", "stage"}
    seeds: dict = field(default_factory=dict)
    cache_hits: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @classmethod
    def load_or_new(cls, out_dir) -> "Manifest":
        out_dir = Path(out_dir)
        path = out_dir / MANIFEST_NAME
        if not path.exists():
            return cls(out_dir=out_dir)
        d = load_json(path)
        # cache hits and failures describe a single invocation
        return cls(out_dir=out_dir, artifacts=dict(d.get("artifacts", {})),
                   seeds=dict(d.get("seeds", {})), config=dict(d.get("config", {})))

    def relpath(self, path) -> str:
        return Path(path).resolve().relative_to(self.out_dir.resolve()).as_posix()

    def record(self, path, stage: str) -> None:
        self.artifacts[self.relpath(path)] = {"sha256": file_sha256(path), "stage": stage}

    def verify(self, path) -> bool:
        """True when `path` is listed and its content still matches the recorded hash."""
        entry = self.artifacts.get(self.relpath(path))
        return entry is not None and Path(path).exists() and file_sha256(path) == entry["sha256"]

    def verify_all(self) -> list:
        problems = []
        for rel, entry in sorted(self.artifacts.items()):
            p = self.out_dir / rel
            if not p.exists():
                problems.append(f"{rel}: missing")
            elif file_sha256(p) != entry["sha256"]:
                problems.append(f"{rel}: hash mismatch")
        return problems

    def to_dict(self) -> dict:
        return {
            "format": "run-manifest/1",
            "versions": {
                "toolkit": TOOLKIT_VERSION,
                "trace_format": TRACE_FORMAT,
                "surrogate_format": SURROGATE_FORMAT,
                "spaces": {a: hp_space(a).version_tag for a in ALGORITHMS},
                "libraries": library_versions(),
            },
            "config": self.config,
            "seeds": dict(sorted(self.seeds.items())),
            "artifacts": dict(sorted(self.artifacts.items())),
            "cache_hits": sorted(self.cache_hits),
            "failures": self.failures,
        }

    def save(self) -> Path:
        path = self.out_dir / MANIFEST_NAME
        # drop entries whose files vanished
        self.artifacts = {rel: e for rel, e in self.artifacts.items() if (self.out_dir / rel).exists()}
        dump_json(self.to_dict(), path)
        return path
