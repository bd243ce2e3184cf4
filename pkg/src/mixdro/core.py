"""Domain types: discrete schemas, samples, datasets, the ground metric and hypotheses."""
from __future__ import annotations

import functools
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

INF = math.inf
NORMS = ("l1", "l2", "linf")
TASKS = ("classification", "regression")


def _levels_default(k: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(k))


@dataclass(frozen=True)
class DiscreteSchema:
    """Layout of the one-hot block of the feature vector.

    Group ``m`` has ``group_sizes[m]`` levels and occupies ``group_sizes[m] - 1``
    columns. The first level is the reference level and is encoded as all zeros.
    """

    group_sizes: tuple[int, ...] = ()
    names: tuple[str, ...] | None = None
    levels: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.group_sizes)
        if any(k < 2 for k in sizes):
            raise ValueError(f"every discrete feature needs at least 2 levels, got {sizes}")
        object.__setattr__(self, "group_sizes", sizes)
        names = self.names if self.names is not None else tuple(f"z{m}" for m in range(len(sizes)))
        levels = self.levels if self.levels is not None else tuple(_levels_default(k) for k in sizes)
        names = tuple(str(s) for s in names)
        levels = tuple(tuple(str(v) for v in lv) for lv in levels)
        if len(names) != len(sizes) or len(levels) != len(sizes):
            raise ValueError("names/levels must have one entry per discrete feature")
        for k, lv in zip(sizes, levels):
            if len(lv) != k or len(set(lv)) != k:
                raise ValueError(f"level list {lv} does not match group size {k}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "levels", levels)

    @property
    def K(self) -> int:
        return len(self.group_sizes)

    @property
    def Mz(self) -> int:
        return sum(k - 1 for k in self.group_sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, o = [], 0
        for k in self.group_sizes:
            out.append(o)
            o += k - 1
        return tuple(out)

    @property
    def size(self) -> int:
        """Number of elements of the discrete support Z."""
        return math.prod(self.group_sizes)

    def block(self, m: int) -> slice:
        o = self.offsets[m]
        return slice(o, o + self.group_sizes[m] - 1)

    def group_index(self) -> np.ndarray:
        """Group id of every one-hot column."""
        return np.repeat(np.arange(self.K), [k - 1 for k in self.group_sizes])

    def check(self, z: np.ndarray) -> None:
        """Raise if ``z`` (vector or matrix of rows) is not an element of Z."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.Mz:
            raise ValueError(f"expected {self.Mz} one-hot columns, got {z.shape[1]}")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("one-hot entries must be 0 or 1")
        if self.Mz and np.any(self.block_sums(z) > 1):
            raise ValueError("a one-hot block has more than one active entry")

    def block_sums(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        if self.K == 0:
            return np.zeros((z.shape[0], 0))
        return np.add.reduceat(z, list(self.offsets), axis=1)

    def to_levels(self, z: np.ndarray) -> np.ndarray:
        """Level index (0 = reference) of every group, rows of ``z`` -> (N, K) ints."""
        z = np.atleast_2d(np.asarray(z))
        out = np.zeros((z.shape[0], self.K), dtype=int)
        r, c = np.nonzero(z > 0.5)
        g = self.group_index()[c]
        out[r, g] = c - np.asarray(self.offsets, dtype=int)[g] + 1
        return out

    def from_levels(self, levels: np.ndarray) -> np.ndarray:
        levels = np.atleast_2d(np.asarray(levels, dtype=int))
        if levels.shape[1] != self.K:
            raise ValueError(f"expected {self.K} level columns")
        if np.any((levels < 0) | (levels >= np.asarray(self.group_sizes, dtype=int))):
            raise ValueError("level index out of range")
        z = np.zeros((levels.shape[0], self.Mz))
        r, m = np.nonzero(levels > 0)
        z[r, np.asarray(self.offsets, dtype=int)[m] + levels[r, m] - 1] = 1.0
        return z

    def enumerate(self, limit: int = 10**6) -> np.ndarray:
        """All elements of Z as rows, in lexicographic level order (read-only, cached)."""
        if self.size > limit:
            raise ValueError(f"|Z| = {self.size} exceeds the enumeration limit {limit}")
        return _enumerate(self.group_sizes)


@functools.lru_cache(maxsize=256)
def _enumerate(sizes: tuple[int, ...]) -> np.ndarray:
    if not sizes:
        out = np.zeros((1, 0))
    else:
        grid = np.array(list(itertools.product(*[range(k) for k in sizes])), dtype=int)
        out = DiscreteSchema(sizes).from_levels(grid)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MixedSample:
    x: np.ndarray
    z: np.ndarray
    y: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """N samples stored column-wise: ``X`` (N, Mx), ``Z`` (N, Mz), ``y`` (N,)."""

    X: np.ndarray
    Z: np.ndarray
    y: np.ndarray
    schema: DiscreteSchema
    task: str
    x_names: tuple[str, ...] | None = None
    y_name: str = "y"
    encoding: object = field(default=None, repr=False)  # dataio.Encoding that produced the arrays

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        n = y.shape[0]
        if n < 1:
            raise ValueError("a dataset needs at least one sample")
        X = np.array(self.X, dtype=float)
        X = X.reshape(n, -1) if X.size else np.zeros((n, 0))
        Z = np.array(self.Z, dtype=float)
        Z = Z.reshape(n, -1) if Z.size else np.zeros((n, 0))
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        self.schema.check(Z)
        if self.task == "classification" and not np.all(np.abs(y) == 1):
            raise ValueError("classification outputs must be -1 or +1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite feature or output values")
        names = self.x_names if self.x_names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("x_names length does not match the continuous block")
        for a in (X, Z, y):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x_names", tuple(names))

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def Mx(self) -> int:
        return self.X.shape[1]

    @property
    def Mz(self) -> int:
        return self.schema.Mz

    @property
    def K(self) -> int:
        return self.schema.K

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, n: int) -> MixedSample:
        return MixedSample(self.X[n], self.Z[n], float(self.y[n]))

    @property
    def samples(self) -> Iterator[MixedSample]:
        return (self[n] for n in range(self.N))

    def subset(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.Z[idx], self.y[idx], self.schema, self.task, self.x_names,
                       self.y_name, self.encoding)

    def fold_discrete(self, keep: Sequence[int] = ()) -> "Dataset":
        """Move the one-hot columns of every group not in ``keep`` into the continuous block."""
        keep = sorted(set(int(m) for m in keep))
        move = [m for m in range(self.K) if m not in keep]
        cols_keep = [c for m in keep for c in range(*self.schema.block(m).indices(self.Mz))]
        cols_move = [c for m in move for c in range(*self.schema.block(m).indices(self.Mz))]
        s = self.schema
        new_schema = DiscreteSchema(
            tuple(s.group_sizes[m] for m in keep),
            tuple(s.names[m] for m in keep),
            tuple(s.levels[m] for m in keep),
        )
        moved_names = tuple(f"{s.names[m]}={s.levels[m][j]}" for m in move for j in range(1, s.group_sizes[m]))
        X = np.hstack([self.X, self.Z[:, cols_move]])
        return Dataset(X, self.Z[:, cols_keep], self.y, new_schema, self.task,
                       self.x_names + moved_names, self.y_name)

    def with_y(self, y: np.ndarray) -> "Dataset":
        return Dataset(self.X, self.Z, y, self.schema, self.task, self.x_names, self.y_name, self.encoding)


def dual_norm_name(norm: str) -> str:
    return {"l1": "linf", "l2": "l2", "linf": "l1"}[norm]


def norm(v: np.ndarray, which: str) -> float:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0.0
    if which == "l1":
        return float(np.abs(v).sum())
    if which == "l2":
        return float(np.linalg.norm(v))
    if which == "linf":
        return float(np.abs(v).max())
    raise ValueError(f"unsupported norm {which!r}")


@dataclass(frozen=True)
class GroundMetric:
    """d = ||x - x'|| + kappa_z * dz + kappa_y * dy. ``kappa_y = inf`` pins the output."""

    x_norm: str = "l1"
    kappa_z: float = 1.0
    kappa_y: float = INF
    p: float = 1.0

    def __post_init__(self):
        if self.x_norm not in NORMS:
            raise ValueError(f"x_norm must be one of {NORMS}, got {self.x_norm!r}")
        if not self.kappa_z > 0 or math.isinf(self.kappa_z):
            raise ValueError("kappa_z must be positive and finite")
        if not self.kappa_y > 0:
            raise ValueError("kappa_y must be positive (inf allowed)")
        if not self.p >= 1 or math.isinf(self.p):
            raise ValueError("p must be a finite real >= 1")
        object.__setattr__(self, "kappa_z", float(self.kappa_z))
        object.__setattr__(self, "kappa_y", float(self.kappa_y))
        object.__setattr__(self, "p", float(self.p))

    @property
    def output_fixed(self) -> bool:
        return math.isinf(self.kappa_y)

    def dual_norm(self, v: np.ndarray) -> float:
        return norm(v, dual_norm_name(self.x_norm))

    def to_dict(self) -> dict:
        return {"x_norm": self.x_norm, "kappa_z": self.kappa_z,
                "kappa_y": "inf" if self.output_fixed else self.kappa_y, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundMetric":
        return cls(d.get("x_norm", "l1"), float(d.get("kappa_z", 1.0)),
                   parse_kappa(d.get("kappa_y", "inf")), float(d.get("p", 1.0)))


def parse_kappa(value, K: int | None = None) -> float:
    """Parse a kappa_y token: a number, ``inf`` or ``K`` (the number of discrete features)."""
    if isinstance(value, (int, float)):
        return float(value)
    s = str(value).strip()
    if s.lower() in ("inf", "infinity", "+inf"):
        return INF
    if s == "K":
        if K is None:
            raise ValueError("kappa_y token 'K' needs the dataset's number of discrete features")
        if K == 0:
            raise ValueError("kappa_y = K is undefined for a dataset without discrete features")
        return float(K)
    return float(s)


def mismatch_counts(Z: np.ndarray, zref: np.ndarray, schema: DiscreteSchema) -> np.ndarray:
    """Number of groups in which each row of ``Z`` differs from ``zref``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if schema.K == 0:
        return np.zeros(Z.shape[0], dtype=int)
    diff = (Z != np.asarray(zref, dtype=float)).astype(int)
    return (np.add.reduceat(diff, list(schema.offsets), axis=1) > 0).sum(axis=1)


def mismatch_rows(Z1: np.ndarray, Z2: np.ndarray, schema: DiscreteSchema) -> np.ndarray:
    """Row-wise number of differing groups between two (N, Mz) matrices."""
    Z1, Z2 = np.atleast_2d(Z1), np.atleast_2d(Z2)
    if schema.K == 0:
        return np.zeros(max(Z1.shape[0], Z2.shape[0]), dtype=int)
    diff = (Z1 != Z2).astype(int)
    return (np.add.reduceat(diff, list(schema.offsets), axis=1) > 0).sum(axis=1)


def _check_dims(z, zp, schema):
    if np.shape(z) != (schema.Mz,) or np.shape(zp) != (schema.Mz,):
        raise ValueError(f"vectors must have length Mz = {schema.Mz}")


def dz(z: np.ndarray, z_prime: np.ndarray, schema: DiscreteSchema, p: float) -> float:
    """(number of differing groups) ** (1/p)."""
    z, z_prime = np.asarray(z, dtype=float), np.asarray(z_prime, dtype=float)
    _check_dims(z, z_prime, schema)
    return float(mismatch_counts(z, z_prime, schema)[0]) ** (1.0 / p)


def dy(y: float, y_prime: float, task: str) -> float:
    if task == "classification":
        return float(y != y_prime)
    return abs(float(y) - float(y_prime))


def du(u: np.ndarray, z_prime: np.ndarray, schema: DiscreteSchema, p: float, tol: float = 1e-12) -> float:
    """Relaxed discrete distance on conv(Z); equals ``dz`` on binary pairs."""
    u, z_prime = np.asarray(u, dtype=float), np.asarray(z_prime, dtype=float)
    _check_dims(u, z_prime, schema)
    if np.any(u < -tol) or (schema.K and np.any(schema.block_sums(u) > 1 + tol)):
        raise ValueError("u lies outside conv(Z)")
    total = 0.0
    for m in range(schema.K):
        diff = u[schema.block(m)] - z_prime[schema.block(m)]
        total += 0.5 * np.abs(diff).sum() + 0.5 * abs(diff.sum())
    return float(max(total, 0.0)) ** (1.0 / p)


def ground_distance(a: MixedSample, b: MixedSample, metric: GroundMetric,
                    schema: DiscreteSchema, task: str) -> float:
    if np.shape(a.x) != np.shape(b.x):
        raise ValueError("continuous blocks differ in length")
    d_out = dy(a.y, b.y, task)
    if d_out > 0 and metric.output_fixed:
        return INF
    return (norm(np.asarray(a.x) - np.asarray(b.x), metric.x_norm)
            + metric.kappa_z * dz(a.z, b.z, schema, metric.p)
            + (0.0 if d_out == 0 else metric.kappa_y * d_out))


@dataclass(frozen=True, eq=False)
class Hypothesis:
    beta0: float
    beta_x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta_z: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "beta0", float(self.beta0))
        object.__setattr__(self, "beta_x", np.asarray(self.beta_x, dtype=float).reshape(-1))
        object.__setattr__(self, "beta_z", np.asarray(self.beta_z, dtype=float).reshape(-1))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Hypothesis):
            return NotImplemented
        return (self.beta0 == other.beta0 and np.array_equal(self.beta_x, other.beta_x)
                and np.array_equal(self.beta_z, other.beta_z))

    __hash__ = None

    def check(self, data: Dataset) -> None:
        if self.beta_x.size != data.Mx or self.beta_z.size != data.Mz:
            raise ValueError(f"hypothesis dims ({self.beta_x.size}, {self.beta_z.size}) "
                             f"do not match data ({data.Mx}, {data.Mz})")

    def score(self, data: Dataset) -> np.ndarray:
        self.check(data)
        return self.beta0 + data.X @ self.beta_x + data.Z @ self.beta_z

    def predict(self, data: Dataset) -> np.ndarray:
        s = self.score(data)
        if data.task == "classification":
            return np.where(s >= 0, 1.0, -1.0)
        return s

    def to_dict(self) -> dict:
        return {"beta0": self.beta0, "beta_x": self.beta_x.tolist(), "beta_z": self.beta_z.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Hypothesis":
        return cls(d["beta0"], d.get("beta_x", []), d.get("beta_z", []))


def schema_document(data: Dataset) -> dict:
    s = data.schema
    return {
        "groups": [{"name": n, "levels": list(lv)} for n, lv in zip(s.names, s.levels)],
        "continuous": list(data.x_names),
        "output": {"name": data.y_name, "task": data.task},
    }


def schema_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def schema_from_document(doc: dict) -> tuple[DiscreteSchema, tuple[str, ...], str, str]:
    """Return (discrete schema, continuous names, output name, task)."""
    try:
        groups = doc.get("groups", [])
        schema = DiscreteSchema(
            tuple(len(g["levels"]) for g in groups),
            tuple(g["name"] for g in groups),
            tuple(tuple(g["levels"]) for g in groups),
        )
        out = doc["output"]
        task = out.get("task", "classification")
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}")
        return schema, tuple(doc.get("continuous", [])), out["name"], task
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed schema document: {exc}") from exc
