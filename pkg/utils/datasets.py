import dataclasses
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from core.errors import DatasetError, SchemaError, UnsupportedInputError
from Utils import dump_json, load_json

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
SIDECAR_SUFFIX = ".meta.json"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"column '{self.name}': unknown kind '{self.kind}'")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.kind == CATEGORICAL and len(self.levels) < 1:
            raise SchemaError(f"categorical column '{self.name}' declares no levels")
        if len(set(self.levels)) != len(self.levels):
            raise SchemaError(f"column '{self.name}' has duplicated levels")

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kind == CATEGORICAL:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSpec":
        return cls(name=d["name"], kind=d["kind"], levels=tuple(d.get("levels", ())))


@dataclass(frozen=True)
class DatasetSchema:
    """
    Column specs plus the label and protected-attribute binarization rules.
    The label column is not a feature; the protected column is (it stays in
    the feature matrix, integer-coded).
    """
    columns: tuple
    label: str
    favorable: tuple
    protected: str
    group1: tuple

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "favorable", tuple(str(v) for v in self.favorable))
        object.__setattr__(self, "group1", tuple(str(v) for v in self.group1))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("schema declares duplicated column names")
        by_name = {c.name: c for c in self.columns}
        if self.label not in by_name:
            raise SchemaError(f"label column '{self.label}' is not declared")
        if self.protected not in by_name:
            raise SchemaError(f"protected column '{self.protected}' is not declared")
        if self.label == self.protected:
            raise SchemaError("label and protected columns must differ")
        for role, col_name, chosen in (("label", self.label, self.favorable),
                                       ("protected", self.protected, self.group1)):
            col = by_name[col_name]
            if col.kind != CATEGORICAL:
                raise SchemaError(f"{role} column '{col_name}' must be categorical")
            unknown = set(chosen) - set(col.levels)
            if unknown:
                raise SchemaError(f"{role} column '{col_name}': unknown levels {sorted(unknown)}")
            if not chosen or len(set(chosen)) >= len(col.levels):
                raise SchemaError(
                    f"{role} column '{col_name}': selected levels must be a nonempty proper subset")

    @property
    def feature_columns(self) -> tuple:
        return tuple(c for c in self.columns if c.name != self.label)

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"unknown column '{name}'")

    def to_dict(self) -> dict:
        return {
            "columns": [c.to_dict() for c in self.columns],
            "label": self.label,
            "favorable": list(self.favorable),
            "protected": self.protected,
            "group1": list(self.group1),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        try:
            return cls(
                columns=tuple(ColumnSpec.from_dict(c) for c in d["columns"]),
                label=d["label"],
                favorable=tuple(d["favorable"]),
                protected=d["protected"],
                group1=tuple(d["group1"]),
            )
        except KeyError as e:
            raise SchemaError(f"schema is missing key {e}") from e

    @classmethod
    def from_json(cls, path) -> "DatasetSchema":
        return cls.from_dict(load_json(path))


@dataclass(frozen=True)
class TabularDataset:
    """
    Numeric-coded feature matrix with binary labels (1 = favorable outcome)
    and a binary protected-group vector. Arrays are read-only after
    construction.
    """
    name: str
    release: str
    rows: np.ndarray
    labels: np.ndarray
    protected: np.ndarray
    column_meta: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float, copy=True)
        labels = np.array(self.labels, dtype=np.int8, copy=True)
        protected = np.array(self.protected, dtype=np.int8, copy=True)
        if rows.ndim != 2:
            raise DatasetError("rows must be a 2-d matrix")
        n = rows.shape[0]
        if n < 1 or labels.shape != (n,) or protected.shape != (n,):
            raise DatasetError(
                f"rows/labels/protected must have equal length >= 1 "
                f"(got {n}, {labels.shape}, {protected.shape})")
        if rows.shape[1] != len(self.column_meta):
            raise DatasetError(
                f"{rows.shape[1]} feature columns but {len(self.column_meta)} column specs")
        if not np.isin(labels, (0, 1)).all() or not np.isin(protected, (0, 1)).all():
            raise DatasetError("labels and protected must contain only 0 or 1")
        for j, col in enumerate(self.column_meta):
            if col.kind == CATEGORICAL:
                codes = rows[:, j]
                if (codes != np.floor(codes)).any() or (codes < 0).any() or (codes >= len(col.levels)).any():
                    raise DatasetError(f"column '{col.name}' holds an invalid level index")
        for arr in (rows, labels, protected):
            arr.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "protected", protected)
        object.__setattr__(self, "column_meta", tuple(self.column_meta))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    @property
    def column_names(self) -> list:
        return [c.name for c in self.column_meta]

    def subset(self, indices) -> "TabularDataset":
        idx = np.asarray(indices, dtype=int)
        return dataclasses.replace(
            self, rows=self.rows[idx], labels=self.labels[idx], protected=self.protected[idx])

    def fingerprint(self) -> str:
        """Content hash used to decide whether cached traces still match their dataset."""
        h = hashlib.sha256()
        h.update(f"{self.name}|{self.release}|{self.column_names}".encode("utf-8"))
        for arr in (self.rows, self.labels, self.protected):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


############### CSV ingestion ###############

def load_csv(path, schema: DatasetSchema, name: str | None = None,
             release: str | None = None) -> TabularDataset:
    """
    Load a UTF-8 CSV with a header row according to `schema`.
    Categoricals become integer codes in schema level order; the label and
    protected columns are binarized. Rows containing empty cells are
    dropped and counted; any other bad cell raises DatasetError naming
    the row and the column.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")

    sidecar = _sidecar_path(path)
    meta = load_json(sidecar) if sidecar.exists() else {}
    name = name or meta.get("name") or path.stem
    release = release or meta.get("release") or "base"

    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    df.columns = [c.strip() for c in df.columns]
    expected = [c.name for c in schema.columns]
    missing = [c for c in expected if c not in df.columns]
    if missing:
        raise SchemaError(f"{path.name}: missing columns {missing}")
    extra = [c for c in df.columns if c not in expected]
    if extra:
        raise SchemaError(f"{path.name}: columns not in schema {extra}")

    df = df[expected].apply(lambda s: s.str.strip())
    empty = (df == "").any(axis=1)
    rejected = int(empty.sum())
    if rejected:
        logger.warning("%s: rejected %d rows with empty cells", path.name, rejected)
    df = df.loc[~empty]
    if df.empty:
        raise DatasetError(f"{path.name}: no complete rows")

    features = schema.feature_columns
    rows = np.empty((len(df), len(features)), dtype=float)
    for j, col in enumerate(features):
        rows[:, j] = _code_column(df[col.name], col)

    label_col = schema.column(schema.label)
    label_codes = _code_column(df[schema.label], label_col)
    favorable_codes = [label_col.levels.index(v) for v in schema.favorable]
    labels = np.isin(label_codes, favorable_codes).astype(np.int8)

    prot_col = schema.column(schema.protected)
    prot_codes = rows[:, [c.name for c in features].index(schema.protected)]
    group1_codes = [prot_col.levels.index(v) for v in schema.group1]
    protected = np.isin(prot_codes, group1_codes).astype(np.int8)

    metadata = {k: v for k, v in meta.get("metadata", {}).items()}
    metadata.update({"source": path.name, "rejected_rows": rejected,
                     "protected_attribute": schema.protected})
    logger.info("Loaded %s (%s): %d rows, %d features", name, release, len(rows), rows.shape[1])
    return TabularDataset(name=name, release=release, rows=rows, labels=labels,
                          protected=protected, column_meta=features, metadata=metadata)


def _code_column(values: pd.Series, col: ColumnSpec) -> np.ndarray:
    if col.kind == NUMERIC:
        # to_numeric's fast parser can be off by an ulp; astype(float) is exact
        try:
            parsed = values.astype(float).to_numpy()
        except ValueError:
            parsed = pd.to_numeric(values, errors="coerce").to_numpy(dtype=float, na_value=np.nan)
        bad = ~np.isfinite(parsed)
        if bad.any():
            pos = int(np.flatnonzero(bad)[0])
            raise DatasetError(f"cannot parse {values.iloc[pos]!r} as a number",
                               row=int(values.index[pos]), column=col.name)
        return parsed

    lookup = {level: i for i, level in enumerate(col.levels)}
    codes = values.map(lookup)
    if codes.isna().any():
        pos = int(np.flatnonzero(codes.isna().to_numpy())[0])
        raise DatasetError(f"unknown level {values.iloc[pos]!r} (expected one of {list(col.levels)})",
                           row=int(values.index[pos]), column=col.name)
    return codes.to_numpy(dtype=float)


def write_csv(ds: TabularDataset, path, schema: DatasetSchema) -> None:
    """
    Write `ds` back to CSV (plus a JSON metadata sidecar) so that
    load_csv(path, schema) reproduces it. Label 1 is written as the first
    favorable level, label 0 as the first other level.
    """
    path = Path(path)
    features = schema.feature_columns
    if [c.name for c in features] != ds.column_names:
        raise SchemaError("dataset columns do not match the schema's feature columns")

    data = {}
    for j, col in enumerate(features):
        column = ds.rows[:, j]
        if col.kind == CATEGORICAL:
            data[col.name] = [col.levels[int(v)] for v in column]
        else:
            data[col.name] = [repr(float(v)) for v in column]
    label_col = schema.column(schema.label)
    unfavorable = [lv for lv in label_col.levels if lv not in schema.favorable][0]
    data[schema.label] = [schema.favorable[0] if y == 1 else unfavorable for y in ds.labels]

    df = pd.DataFrame(data)[[c.name for c in schema.columns]]
    df.to_csv(path, index=False, encoding="utf-8")
    dump_json({"name": ds.name, "release": ds.release, "metadata": ds.metadata},
              _sidecar_path(path))


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.stem + SIDECAR_SUFFIX)


############### Splitting ###############

def split(ds: TabularDataset, train_fraction: float, seed: int):
    """
    Seeded disjoint partition into sizes ceil(n*f) and n - ceil(n*f).
    Both parts keep the dataset's metadata and column specs.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(ds)
    k = math.ceil(n * train_fraction - 1e-9)
    if k <= 0 or k >= n:
        raise ValueError(f"splitting {n} rows at {train_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[:k])), ds.subset(np.sort(perm[k:]))


############### Synthetic data ###############

@dataclass(frozen=True)
class SynthSpec:
    n_rows: int = 2000
    n_numeric: int = 4
    n_categorical: int = 2
    group1_fraction: float = 0.5
    base_rate_g0: float = 0.3
    base_rate_g1: float = 0.5
    signal_strength: float = 1.0
    seed: int = 0
    n_levels: int = 4
    proxy_strength: float = 0.5
    feature_offsets: tuple = ()
    categorical_offsets: tuple = ()
    name: str = "synthetic"
    release: str = "base"

    def __post_init__(self):
        offsets = tuple(float(v) for v in self.feature_offsets) or (0.0,) * self.n_numeric
        object.__setattr__(self, "feature_offsets", offsets)
        cat_offsets = tuple(float(v) for v in self.categorical_offsets) or (0.0,) * self.n_categorical
        object.__setattr__(self, "categorical_offsets", cat_offsets)
        for key in ("group1_fraction", "base_rate_g0", "base_rate_g1"):
            value = getattr(self, key)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{key} must lie in [0, 1], got {value}")
        if self.n_rows < 10:
            raise ValueError(f"n_rows must be >= 10, got {self.n_rows}")
        if self.n_numeric < 0 or self.n_categorical < 0 or self.n_numeric + self.n_categorical < 1:
            raise ValueError("a synthetic dataset needs at least one non-protected feature")
        if self.n_levels < 2:
            raise ValueError("categorical columns need at least 2 levels")
        if len(offsets) != self.n_numeric:
            raise ValueError("feature_offsets must have one entry per numeric column")
        if len(cat_offsets) != self.n_categorical:
            raise ValueError("categorical_offsets must have one entry per categorical column")
        if self.signal_strength < 0:
            raise ValueError("signal_strength must be >= 0")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["feature_offsets"] = list(self.feature_offsets)
        d["categorical_offsets"] = list(self.categorical_offsets)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: (tuple(v) if k in ("feature_offsets", "categorical_offsets") else v)
                      for k, v in d.items() if k in known})


def synth_generate(spec: SynthSpec) -> TabularDataset:
    """
    Draw a fairness-sensitive dataset: group membership first, then labels
    at the group's base rate, then features that lean towards the label by
    `signal_strength`. Column 'num_0' also carries a group proxy of size
    `proxy_strength`; the protected attribute itself is the last column.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    protected = (rng.random(n) < spec.group1_fraction).astype(np.int8)
    rate = np.where(protected == 1, spec.base_rate_g1, spec.base_rate_g0)
    labels = (rng.random(n) < rate).astype(np.int8)
    signed = 2.0 * labels - 1.0

    columns, blocks = [], []
    for j in range(spec.n_numeric):
        loading = 1.0 / (1.0 + 0.5 * j)
        x = spec.feature_offsets[j] + spec.signal_strength * loading * signed + rng.normal(size=n)
        if j == 0:
            x = x + spec.proxy_strength * protected
        blocks.append(x)
        columns.append(ColumnSpec(f"num_{j}", NUMERIC))

    inner_edges = np.linspace(-1.0, 1.0, spec.n_levels - 1) if spec.n_levels > 2 else np.array([0.0])
    levels = tuple(f"L{k}" for k in range(spec.n_levels))
    for j in range(spec.n_categorical):
        latent = spec.categorical_offsets[j] + 0.5 * spec.signal_strength * signed + rng.normal(size=n)
        blocks.append(np.digitize(latent, inner_edges).astype(float))
        columns.append(ColumnSpec(f"cat_{j}", CATEGORICAL, levels))

    blocks.append(protected.astype(float))
    columns.append(ColumnSpec("group", CATEGORICAL, ("g0", "g1")))

    warnings = []
    for g, expected in ((0, n * (1.0 - spec.group1_fraction)), (1, n * spec.group1_fraction)):
        if expected < 5:
            warnings.append(f"group {g} expected size {expected:.1f} is degenerate")
    for w in warnings:
        logger.warning("synth_generate: %s", w)

    return TabularDataset(
        name=spec.name, release=spec.release, rows=np.column_stack(blocks),
        labels=labels, protected=protected, column_meta=tuple(columns),
        metadata={"synth_spec": spec.to_dict(), "warnings": warnings,
                  "protected_attribute": "group"})


def synth_shift(ds: TabularDataset, drift: float, seed: int) -> TabularDataset:
    """
    Re-generate `ds` from its stored SynthSpec with numeric column means and
    the latents behind categorical columns moved by drift * (their std) in
    seeded random directions, and group base rates moved by 0.15 * drift.
    drift=0 gives a fresh i.i.d. sample of the original.
    """
    if drift < 0:
        raise ValueError(f"drift must be >= 0, got {drift}")
    stored = ds.metadata.get("synth_spec")
    if stored is None:
        raise UnsupportedInputError(
            f"dataset '{ds.name}' ({ds.release}) carries no synthetic spec; only "
            f"synth_generate outputs can be shifted")
    spec = SynthSpec.from_dict(stored)

    rng = np.random.default_rng(seed)
    directions = rng.choice((-1.0, 1.0), size=spec.n_numeric)
    rate_directions = rng.choice((-1.0, 1.0), size=2)
    stds = ds.rows[:, :spec.n_numeric].std(axis=0) if spec.n_numeric else np.zeros(0)
    cat_directions = rng.choice((-1.0, 1.0), size=spec.n_categorical)
    latent_std = math.sqrt(1.0 + (0.5 * spec.signal_strength) ** 2)

    offsets = tuple(float(o + drift * d * s)
                    for o, d, s in zip(spec.feature_offsets, directions, stds))
    cat_offsets = tuple(float(o + drift * d * latent_std)
                        for o, d in zip(spec.categorical_offsets, cat_directions))
    shifted = dataclasses.replace(
        spec,
        feature_offsets=offsets,
        categorical_offsets=cat_offsets,
        base_rate_g0=float(np.clip(spec.base_rate_g0 + 0.15 * drift * rate_directions[0], 0.0, 1.0)),
        base_rate_g1=float(np.clip(spec.base_rate_g1 + 0.15 * drift * rate_directions[1], 0.0, 1.0)),
        seed=int(seed),
        release=f"drift-{drift:g}",
    )
    out = synth_generate(shifted)
    metadata = dict(out.metadata)
    metadata.update({"shifted_from": ds.release, "drift": float(drift)})
    logger.info("synth_shift: %s %s -> %s", ds.name, ds.release, shifted.release)
    return dataclasses.replace(out, metadata=metadata)
