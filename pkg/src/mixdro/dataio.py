"""CSV ingestion, schema handling, one-hot encoding, output mapping and splits."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import TASKS, Dataset, DiscreteSchema, schema_document, schema_from_document, schema_hash

MISSING = frozenset({"", "?", "NA", "na", "N/A", "NaN", "nan"})
KINDS = ("numeric", "categorical", "output")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class DataWarning(UserWarning):
    pass


def _is_number(cell: str) -> bool:
    try:
        return math.isfinite(float(cell))
    except ValueError:
        return False


def sorted_levels(values) -> tuple[str, ...]:
    """Distinct values in sorted order: numerically if every value is a number."""
    uniq = set(values)
    if uniq and all(_is_number(v) for v in uniq):
        return tuple(sorted(uniq, key=lambda v: (float(v), v)))
    return tuple(sorted(uniq))


@dataclass(frozen=True, eq=False)
class RawTable:
    """String cells with a kind per column; at most one output column.

    ``levels`` fixes the level order of every categorical column (and of a
    classification output). ``output`` is None only for feature-only tables
    read for prediction.
    """

    columns: tuple[str, ...]
    kinds: tuple[str, ...]
    cells: tuple[tuple[str, ...], ...]
    levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    task: str | None = None
    dropped: int = 0

    def __post_init__(self):
        if len(self.columns) != len(self.kinds) or len(set(self.columns)) != len(self.columns):
            raise DataError("column names must be unique and match the kinds")
        if any(k not in KINDS for k in self.kinds):
            raise DataError(f"unknown column kind in {self.kinds}")
        if self.kinds.count("output") > 1:
            raise DataError("more than one output column")
        for i, row in enumerate(self.cells):
            if len(row) != len(self.columns):
                raise DataError(f"row {i} has {len(row)} cells, expected {len(self.columns)}")
        if self.output is not None and self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")

    @property
    def n_rows(self) -> int:
        return len(self.cells)

    @property
    def output(self) -> str | None:
        return self.columns[self.kinds.index("output")] if "output" in self.kinds else None

    def names(self, kind: str) -> tuple[str, ...]:
        return tuple(c for c, k in zip(self.columns, self.kinds) if k == kind)

    def column(self, name: str) -> tuple[str, ...]:
        j = self.columns.index(name)
        return tuple(row[j] for row in self.cells)


def read_schema(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read schema {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"schema {path} is not valid JSON: {exc}") from exc
    try:
        schema_from_document(doc)
    except ValueError as exc:
        raise DataError(f"schema {path}: {exc}") from exc
    return doc


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path} is not UTF-8: {exc}") from exc
    rows = [r for r in rows if r]  # tolerate blank lines
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in the header")
    body = []
    for line, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DataError(f"{path}, line {line}: expected {len(header)} cells, found {len(r)}")
        body.append([c.strip() for c in r])
    return header, body


def load_csv(path: str | Path, schema: str | Path | dict | None = None, *, output: str | None = None,
             task: str | None = None, drop: Sequence[str] = (), require_output: bool = True) -> RawTable:
    """Read a comma-separated file with a header row.

    With a schema (path or document) the declared columns are used and every
    categorical cell must be a declared level. Without one, non-numeric columns
    are categorical, the output is ``output`` or the last column, and the task is
    classification when the output is non-numeric or takes exactly two values.
    Rows with missing cells (empty, ``?``, ``NA``) are dropped with a warning.
    """
    header, body = _read_rows(path)
    unknown = [c for c in drop if c not in header]
    if unknown:
        raise DataError(f"cannot drop unknown columns {unknown}")
    if schema is not None:
        doc = read_schema(schema) if not isinstance(schema, dict) else schema
        sch, cont, out_name, task = schema_from_document(doc)
        declared = list(cont) + list(sch.names)
        missing = [c for c in declared if c not in header]
        if missing:
            raise DataError(f"schema columns not found in {path}: {missing}")
        if out_name not in header and require_output:
            raise DataError(f"output column {out_name!r} not found in {path}")
        kind_of = {c: "numeric" for c in cont}
        kind_of.update({c: "categorical" for c in sch.names})
        if out_name in header:
            kind_of[out_name] = "output"
        levels = {n: lv for n, lv in zip(sch.names, sch.levels)}
        out_levels = doc["output"].get("levels")
        if out_levels is not None:
            levels[out_name] = tuple(str(v) for v in out_levels)
    else:
        out_name = output if output is not None else header[-1]
        if out_name not in header:
            if require_output:
                raise DataError(f"output column {out_name!r} not found in {path}")
        kind_of, levels = {}, {}
    cols = [c for c in header if c not in drop and (schema is None or c in kind_of)]
    if schema is None and out_name in cols:
        cols.remove(out_name)
        cols.append(out_name)
    idx = [header.index(c) for c in cols]
    rows = [tuple(r[j] for j in idx) for r in body]
    keep = [r for r in rows if not any(c in MISSING for c in r)]
    dropped = len(rows) - len(keep)
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} of {len(rows)} rows with missing cells", DataWarning,
                      stacklevel=2)
    if not keep:
        raise DataError(f"{path}: no complete rows")
    if schema is None:
        for j, c in enumerate(cols):
            if c == out_name:
                kind_of[c] = "output"
            else:
                vals = [r[j] for r in keep]
                kind_of[c] = "numeric" if all(_is_number(v) for v in vals) else "categorical"
                if kind_of[c] == "categorical":
                    levels[c] = sorted_levels(vals)
        if out_name in cols:
            yv = [r[cols.index(out_name)] for r in keep]
            if task is None:
                numeric = all(_is_number(v) for v in yv)
                task = "classification" if (not numeric or len(set(yv)) == 2) else "regression"
            if task == "classification":
                levels[out_name] = sorted_levels(yv)
    kinds = tuple(kind_of[c] for c in cols)
    for j, (c, k) in enumerate(zip(cols, kinds)):
        if k == "numeric":
            bad = next((r[j] for r in keep if not _is_number(r[j])), None)
            if bad is not None:
                raise DataError(f"column {c!r}: non-numeric value {bad!r}")
        elif k == "categorical" or (k == "output" and c in levels):
            allowed = set(levels[c])
            bad = next((r[j] for r in keep if r[j] not in allowed), None)
            if bad is not None:
                raise DataError(f"column {c!r}: level {bad!r} is not declared in the schema")
        elif k == "output" and task == "regression":
            bad = next((r[j] for r in keep if not _is_number(r[j])), None)
            if bad is not None:
                raise DataError(f"output column {c!r}: non-numeric value {bad!r}")
    return RawTable(tuple(cols), kinds, tuple(keep), levels, task, dropped)


@dataclass(frozen=True)
class EncodeOptions:
    y_mapping: Mapping[str, float] | None = None   # classification level -> +-1
    positive: Sequence[str] | None = None          # alternative: levels mapped to +1
    regression_scale_to: tuple[float, float] = (-1.0, 1.0)
    minmax_x: bool = False


@dataclass(frozen=True)
class Encoding:
    """Everything needed to turn a RawTable into a Dataset and outputs back into raw units."""

    groups: tuple[tuple[str, tuple[str, ...]], ...]
    continuous: tuple[str, ...]
    output: str
    task: str
    y_map: tuple[tuple[str, float], ...] | None = None
    y_range: tuple[float, float] | None = None
    scale_to: tuple[float, float] = (-1.0, 1.0)
    x_min: tuple[float, ...] | None = None
    x_max: tuple[float, ...] | None = None

    @property
    def schema(self) -> DiscreteSchema:
        return DiscreteSchema(tuple(len(lv) for _, lv in self.groups), tuple(n for n, _ in self.groups),
                              tuple(lv for _, lv in self.groups))

    def document(self) -> dict:
        """Schema document in the core format."""
        return {"groups": [{"name": n, "levels": list(lv)} for n, lv in self.groups],
                "continuous": list(self.continuous),
                "output": {"name": self.output, "task": self.task}}

    def schema_hash(self) -> str:
        return schema_hash(self.document())

    def features(self, table: RawTable) -> tuple[np.ndarray, np.ndarray]:
        """(X, Z) arrays of a table with the columns of this encoding."""
        missing = [c for c in self.continuous + tuple(n for n, _ in self.groups) if c not in table.columns]
        if missing:
            raise DataError(f"columns {missing} are missing from the data")
        n = table.n_rows
        X = np.zeros((n, len(self.continuous)))
        for j, c in enumerate(self.continuous):
            try:
                X[:, j] = [float(v) for v in table.column(c)]
            except ValueError as exc:
                raise DataError(f"column {c!r}: {exc}") from exc
        if self.x_min is not None:
            lo, hi = np.array(self.x_min), np.array(self.x_max)
            span = np.where(hi > lo, hi - lo, 1.0)
            X = (X - lo) / span
        sch = self.schema
        levels = np.zeros((n, sch.K), dtype=int)
        for m, (name, lv) in enumerate(self.groups):
            pos = {v: i for i, v in enumerate(lv)}
            col = table.column(name)
            bad = next((v for v in col if v not in pos), None)
            if bad is not None:
                raise DataError(f"column {name!r}: level {bad!r} was not seen when the encoding was built")
            levels[:, m] = [pos[v] for v in col]
        return X, sch.from_levels(levels)

    def encode_y(self, raw: Sequence[str]) -> np.ndarray:
        if self.task == "classification":
            mapping = dict(self.y_map)
            bad = next((v for v in raw if v not in mapping), None)
            if bad is not None:
                raise DataError(f"output {self.output!r}: unknown level {bad!r}")
            return np.array([mapping[v] for v in raw], dtype=float)
        y = np.array([float(v) for v in raw])
        lo, hi = self.y_range
        s0, s1 = self.scale_to
        return s0 + (y - lo) * (s1 - s0) / (hi - lo)

    def decode_y(self, values: np.ndarray) -> np.ndarray:
        """Raw-unit outputs: original values for regression, level names for classification."""
        values = np.asarray(values, dtype=float)
        if self.task == "classification":
            inv = {}
            for lv, v in self.y_map:
                inv.setdefault(v, lv)
            return np.array([inv[1.0 if v >= 0 else -1.0] for v in values], dtype=object)
        lo, hi = self.y_range
        s0, s1 = self.scale_to
        return lo + (values - s0) * (hi - lo) / (s1 - s0)

    def transform(self, table: RawTable) -> Dataset:
        if table.output != self.output:
            raise DataError(f"output column {self.output!r} not found")
        X, Z = self.features(table)
        y = self.encode_y(table.column(self.output))
        return Dataset(X, Z, y, self.schema, self.task, self.continuous, self.output, self)

    def to_dict(self) -> dict:
        return {"groups": [[n, list(lv)] for n, lv in self.groups], "continuous": list(self.continuous),
                "output": self.output, "task": self.task,
                "y_map": None if self.y_map is None else [[k, v] for k, v in self.y_map],
                "y_range": None if self.y_range is None else list(self.y_range),
                "scale_to": list(self.scale_to),
                "x_min": None if self.x_min is None else list(self.x_min),
                "x_max": None if self.x_max is None else list(self.x_max)}

    @classmethod
    def from_dict(cls, d: dict) -> "Encoding":
        return cls(tuple((n, tuple(lv)) for n, lv in d["groups"]), tuple(d["continuous"]), d["output"], d["task"],
                   None if d.get("y_map") is None else tuple((k, float(v)) for k, v in d["y_map"]),
                   None if d.get("y_range") is None else tuple(d["y_range"]),
                   tuple(d.get("scale_to", (-1.0, 1.0))),
                   None if d.get("x_min") is None else tuple(d["x_min"]),
                   None if d.get("x_max") is None else tuple(d["x_max"]))


def fit_encoding(table: RawTable, options: EncodeOptions | None = None) -> Encoding:
    opts = options or EncodeOptions()
    if table.output is None:
        raise DataError("the table has no output column")
    groups = []
    for c in table.names("categorical"):
        lv = tuple(table.levels[c]) if c in table.levels else sorted_levels(table.column(c))
        if len(lv) < 2:
            raise DataError(f"categorical column {c!r} has a single level {lv}")
        groups.append((c, lv))
    cont = table.names("numeric")
    raw_y = table.column(table.output)
    y_map = y_range = None
    if table.task == "classification":
        lv = tuple(table.levels.get(table.output) or sorted_levels(raw_y))
        if opts.y_mapping is not None:
            y_map = {str(k): float(v) for k, v in opts.y_mapping.items()}
            if any(v not in (-1.0, 1.0) for v in y_map.values()):
                raise DataError("y_mapping values must be -1 or +1")
            missing = sorted(set(raw_y) - set(y_map))
            if missing:
                raise DataError(f"y_mapping does not cover output levels {missing}")
        elif opts.positive is not None:
            pos = {str(v) for v in opts.positive}
            y_map = {v: (1.0 if v in pos else -1.0) for v in lv}
        elif len(lv) == 2:
            y_map = {lv[0]: -1.0, lv[1]: 1.0}
        else:
            raise DataError(f"output {table.output!r} has {len(lv)} levels; give y_mapping or positive levels")
        if len(set(y_map[v] for v in set(raw_y))) < 2:
            raise DataError(f"output {table.output!r} is constant after mapping")
        y_map = tuple(sorted(y_map.items()))
    else:
        y = np.array([float(v) for v in raw_y])
        lo, hi = float(y.min()), float(y.max())
        if hi <= lo:
            raise DataError(f"output {table.output!r} is constant")
        y_range = (lo, hi)
        s0, s1 = (float(v) for v in opts.regression_scale_to)
        if not s1 > s0:
            raise DataError("regression_scale_to must be an increasing pair")
    x_min = x_max = None
    if opts.minmax_x and cont:
        X = np.array([[float(v) for v in table.column(c)] for c in cont]).T
        x_min, x_max = tuple(X.min(axis=0).tolist()), tuple(X.max(axis=0).tolist())
    return Encoding(tuple(groups), cont, table.output, table.task, y_map, y_range,
                    tuple(float(v) for v in opts.regression_scale_to), x_min, x_max)


def encode(table: RawTable, options: EncodeOptions | None = None) -> Dataset:
    """One-hot (drop-first) encode the categorical columns and map the output.

    The fitted Encoding travels with the dataset as ``data.encoding``.
    """
    return fit_encoding(table, options).transform(table)


def load_dataset(path: str | Path, schema: str | Path | dict | None = None,
                 options: EncodeOptions | None = None, **kwargs) -> Dataset:
    return encode(load_csv(path, schema, **kwargs), options)


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write a dataset back to CSV with level names (the inverse of load + encode)."""
    sch = data.schema
    levels = sch.to_levels(data.Z)
    enc = data.encoding if isinstance(data.encoding, Encoding) else None
    y = enc.decode_y(data.y) if enc is not None else data.y
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(data.x_names) + list(sch.names) + [data.y_name])
        for n in range(data.N):
            w.writerow([repr(float(v)) for v in data.X[n]]
                       + [sch.levels[m][levels[n, m]] for m in range(sch.K)]
                       + [y[n] if enc is not None and data.task == "classification" else repr(float(y[n]))])


def write_schema(data: Dataset, path: str | Path) -> dict:
    doc = data.encoding.document() if isinstance(data.encoding, Encoding) else schema_document(data)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    return doc


def dataset_hash(data: Dataset) -> str:
    h = hashlib.sha256(schema_hash(schema_document(data)).encode())
    for a in (data.X, data.Z, data.y):
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()


def split_indices(N: int, fraction: float = 0.8, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    if N < 2:
        raise DataError("a split needs at least two samples")
    if not 0 < fraction < 1:
        raise DataError("fraction must lie in (0, 1)")
    n_train = math.floor(fraction * N)
    if n_train < 1:
        raise DataError(f"fraction {fraction} leaves no training samples out of {N}")
    perm = np.random.default_rng(seed).permutation(N)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(data: Dataset, fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random train/test partition with floor(fraction * N) training samples."""
    tr, te = split_indices(data.N, fraction, seed)
    return data.subset(tr), data.subset(te)


def kfold_indices(N: int, folds: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    if not 2 <= folds <= N:
        raise DataError(f"cannot make {folds} folds from {N} samples")
    perm = np.random.default_rng(seed).permutation(N)
    parts = np.array_split(perm, folds)
    return [(np.sort(np.concatenate(parts[:k] + parts[k + 1:])), np.sort(parts[k])) for k in range(folds)]


def save_split_manifest(path: str | Path, data: Dataset, fraction: float, seed: int,
                        train: np.ndarray, test: np.ndarray) -> dict:
    doc = {"dataset": dataset_hash(data), "N": data.N, "fraction": fraction, "seed": seed,
           "train": [int(i) for i in train], "test": [int(i) for i in test]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return doc


def load_split_manifest(path: str | Path, data: Dataset | None = None) -> tuple[np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if data is not None and doc.get("dataset") not in (None, dataset_hash(data)):
        raise DataError(f"split manifest {path} was made for a different dataset")
    return np.array(doc["train"], dtype=int), np.array(doc["test"], dtype=int)
