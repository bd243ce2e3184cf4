"""Experiment engine: synthetic data, cross-validation, benchmarks and the small studies."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .core import INF, Dataset, DiscreteSchema, GroundMetric, Hypothesis, parse_kappa
from .cutter import CutterOptions, SolveLog, train, worst_case
from .dataio import dataset_hash, kfold_indices, split_indices
from .losses import LossSpec, eval_loss
from .master import ModelConfig
from .transport_oracle import FiniteSupport, worst_case_primal

log = logging.getLogger(__name__)

METHODS = ("nom", "mixf", "r_nom", "r_mixf", "conf")
GRID_LIMIT = 10**4
DEFAULT_EPSILONS = (0.0, 1e-5, 1e-3, 1e-1)
DEFAULT_KAPPA_YS = (1.0, "K", INF)
DEFAULT_ALPHAS = (0.0,) + tuple(c * 10.0 ** -p for p in range(1, 7) for c in (1, 5))
TREATMENT_EPSILONS = tuple(round(0.005 * k, 3) for k in range(1, 21))


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None or jobs <= 0:
        try:
            return max(1, len(os.sched_getaffinity(0)))
        except AttributeError:
            return max(1, os.cpu_count() or 1)
    return int(jobs)


def _map(fn, items: list, jobs: int | None) -> list:
    """Ordered map, in-process for one worker and over a process pool otherwise."""
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, *zip(*items)))


# ---------------------------------------------------------------- grids and fits


@dataclass(frozen=True)
class CVGrid:
    """Candidate hyperparameters; kappa_y entries may be numbers, ``"K"`` or ``inf``."""

    epsilons: tuple = DEFAULT_EPSILONS
    kappa_ys: tuple = DEFAULT_KAPPA_YS
    alphas: tuple = DEFAULT_ALPHAS
    folds: int = 5

    def __post_init__(self):
        for name in ("epsilons", "kappa_ys", "alphas"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, vals)
        if any(not (e >= 0 and math.isfinite(e)) for e in self.epsilons):
            raise ValueError("epsilons must be finite and nonnegative")
        if any(not a >= 0 for a in self.alphas):
            raise ValueError("alphas must be nonnegative")
        for k in self.kappa_ys:
            parse_kappa(k, 1)
        if int(self.folds) < 2:
            raise ValueError("at least two folds are needed")
        n = len(self.epsilons) * len(self.kappa_ys) * len(self.alphas)
        if n > GRID_LIMIT:
            raise ValueError(f"grid has {n} combinations, more than the limit {GRID_LIMIT}")

    def combos(self, method: str) -> list[dict]:
        """Distinct hyperparameter settings of ``method`` (kappa_y is irrelevant at epsilon = 0)."""
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
        alphas = self.alphas if method in ("r_nom", "r_mixf") else (0.0,)
        if method in ("nom", "r_nom"):
            return [{"epsilon": 0.0, "kappa_y": None, "alpha": a} for a in alphas]
        out = []
        for e, a in itertools.product(self.epsilons, alphas):
            kys = (None,) if e == 0 else self.kappa_ys
            out.extend({"epsilon": e, "kappa_y": k, "alpha": a} for k in kys)
        return out

    def to_dict(self) -> dict:
        return {"epsilons": list(self.epsilons), "kappa_ys": [_token(k) for k in self.kappa_ys],
                "alphas": list(self.alphas), "folds": self.folds}


def _token(k):
    if k is None:
        return None
    if isinstance(k, str):
        try:
            k = float(k)
        except ValueError:
            return k  # the K token
    return "inf" if math.isinf(k) else float(k)


def method_config(method: str, combo: dict, loss: LossSpec, K: int,
                  base: GroundMetric | None = None) -> ModelConfig:
    """ModelConfig of one grid point; ``K`` resolves the ``"K"`` token."""
    base = base or GroundMetric("l1", 1.0, 1.0, 1)
    ky = combo.get("kappa_y")
    kappa_y = base.kappa_y if ky is None else parse_kappa(ky, max(K, 1))
    metric = GroundMetric(base.x_norm, base.kappa_z, kappa_y, base.p)
    mode = "continuous_baseline" if method == "conf" else "mixed"
    return ModelConfig(loss, metric, float(combo["epsilon"]), ridge_alpha=float(combo.get("alpha") or 0.0),
                       mode=mode)


def prediction_error(h: Hypothesis, data: Dataset) -> float:
    """Misclassification rate, or mean squared error on the (scaled) output."""
    if data.task == "classification":
        return float(np.mean(h.predict(data) != data.y))
    r = h.score(data) - data.y
    return float(np.mean(r * r))


def expected_loss(h: Hypothesis, data: Dataset, loss: LossSpec) -> float:
    s = h.score(data)
    e = data.y * s if data.task == "classification" else s - data.y
    return float(np.mean(eval_loss(loss, e)))


# ---------------------------------------------------------------- synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    N: int = 20
    Mx: int = 0
    K: int = 20
    levels: int = 2
    loss: LossSpec = field(default_factory=lambda: LossSpec("hinge"))
    seed: int = 0
    flip_rate: float = 0.15   # classification: fraction of labels flipped
    noise: float = 0.1        # regression: residual std relative to the signal std

    def __post_init__(self):
        if self.N < 1 or self.Mx < 0 or self.K < 0 or self.levels < 2:
            raise ValueError("invalid synthetic dimensions")
        if not 0 <= self.flip_rate < 0.5 or self.noise < 0:
            raise ValueError("invalid noise settings")


@dataclass(frozen=True, eq=False)
class SyntheticInstance:
    """A planted linear model plus a sampler for fresh data from the same distribution."""

    spec: SyntheticSpec
    truth: Hypothesis
    schema: DiscreteSchema
    signal_scale: float
    train: Dataset

    @property
    def noise_rate(self) -> float:
        return self.spec.flip_rate if self.spec.loss.task == "classification" else self.spec.noise

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        sp_ = self.spec
        X = rng.standard_normal((n, sp_.Mx))
        levels = rng.integers(0, sp_.levels, size=(n, sp_.K))
        Z = self.schema.from_levels(levels)
        score = self.truth.beta0 + X @ self.truth.beta_x + Z @ self.truth.beta_z
        if sp_.loss.task == "classification":
            y = np.where(score >= 0, 1.0, -1.0)
            flip = rng.permutation(n)[:int(round(sp_.flip_rate * n))]
            y[flip] *= -1
        else:
            y = (score + sp_.noise * self.signal_scale * rng.standard_normal(n)) / (3 * self.signal_scale)
        return Dataset(X, Z, y, self.schema, sp_.loss.task)


def synthetic_instance(spec: SyntheticSpec) -> SyntheticInstance:
    rng = np.random.default_rng(spec.seed)
    schema = DiscreteSchema((spec.levels,) * spec.K)
    bx = rng.standard_normal(spec.Mx)
    bz = rng.standard_normal(schema.Mz)
    # center the planted score so that both classes occur
    mean_z = np.full(schema.Mz, 1.0 / spec.levels)
    truth = Hypothesis(-float(bz @ mean_z), bx, bz)
    scale = float(np.sqrt(bx @ bx + bz @ bz * (1 / spec.levels) * (1 - 1 / spec.levels))) or 1.0
    inst = SyntheticInstance(spec, truth, schema, scale, None)
    train_ = inst.sample(spec.N, rng)
    return replace(inst, train=train_)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Training sample of a planted model; see SyntheticSpec for the noise model."""
    return synthetic_instance(spec).train


def runtime_instance(N: int, n_features: int = 30, discrete_fraction: float = 0.25, levels: int = 4,
                     loss: LossSpec | None = None, seed: int = 0) -> Dataset:
    """Mixed instance with ``round(discrete_fraction * n_features)`` discrete features."""
    K = int(round(discrete_fraction * n_features))
    return generate_synthetic(SyntheticSpec(N, n_features - K, K, levels, loss or LossSpec("hinge"), seed))


# ---------------------------------------------------------------- cross-validation


@dataclass
class CVResult:
    method: str
    best: dict
    hypothesis: Hypothesis
    scores: list[tuple[dict, float]]
    refit_log: SolveLog
    seconds: float


def _fit(data: Dataset, method: str, combo: dict, loss: LossSpec, K: int, base: GroundMetric | None,
         options: CutterOptions | None):
    return train(data, method_config(method, combo, loss, K, base), options)


def run_cv(data: Dataset, method: str, grid: CVGrid, loss: LossSpec, seed: int = 0,
           base: GroundMetric | None = None, options: CutterOptions | None = None) -> CVResult:
    """k-fold CV over the method's grid, then a refit of the best setting on all of ``data``.

    Ties keep the earliest grid point. A failing combination is skipped with a warning.
    """
    t0 = time.perf_counter()
    combos = grid.combos(method)
    K = data.K
    folds = kfold_indices(data.N, grid.folds, seed) if len(combos) > 1 else []
    scores = []
    for combo in combos:
        if not folds:
            scores.append((combo, 0.0))
            break
        errs = []
        try:
            for tr, va in folds:
                h = _fit(data.subset(tr), method, combo, loss, K, base, options).hypothesis
                errs.append(prediction_error(h, data.subset(va)))
        except Exception as exc:  # a bad grid point must not sink the whole run
            log.warning("%s %s skipped: %s", method, combo, exc)
            continue
        scores.append((combo, float(np.mean(errs))))
    if not scores:
        raise RuntimeError(f"every grid point of {method} failed")
    best = min(scores, key=lambda t: t[1])[0]  # min keeps the first of equal scores
    res = _fit(data, method, best, loss, K, base, options)
    return CVResult(method, best, res.hypothesis, scores, res.log, time.perf_counter() - t0)


# ---------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class SplitPlan:
    count: int = 20
    fraction: float = 0.8
    seed: int = 0

    def seeds(self) -> list[int]:
        return [self.seed + s for s in range(self.count)]


@dataclass
class BenchmarkReport:
    dataset: str
    dataset_hash: str
    loss: str
    methods: list[str]
    plan: SplitPlan
    grid: dict
    errors: dict = field(default_factory=dict)      # method -> per-split error (nan when failed)
    runtimes: dict = field(default_factory=dict)    # method -> per-split seconds
    chosen: dict = field(default_factory=dict)      # method -> per-split chosen combo
    failures: list = field(default_factory=list)

    def mean(self, method: str) -> float:
        return float(np.nanmean(self.errors[method]))

    def std(self, method: str) -> float:
        v = np.asarray(self.errors[method], dtype=float)
        v = v[np.isfinite(v)]
        return float(v.std(ddof=1)) if v.size > 1 else 0.0

    def p_value(self, a: str, b: str) -> float:
        """Two-sided paired t-test of the per-split errors of two methods."""
        x, y = np.asarray(self.errors[a], dtype=float), np.asarray(self.errors[b], dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if ok.sum() < 2 or np.allclose(x[ok], y[ok]):
            return math.nan
        return float(stats.ttest_rel(x[ok], y[ok]).pvalue)

    def table_rows(self) -> list[dict]:
        rows = []
        for m in self.methods:
            row = {"method": m, "mean_error": self.mean(m), "std_error": self.std(m),
                   "mean_runtime_s": float(np.mean(self.runtimes[m])),
                   "splits_ok": int(np.isfinite(self.errors[m]).sum())}
            for ref in ("nom", "r_nom", "conf"):
                if m in ("mixf", "r_mixf") and ref in self.methods:
                    row[f"p_vs_{ref}"] = self.p_value(m, ref)
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "dataset_hash": self.dataset_hash, "loss": self.loss,
                "methods": self.methods, "splits": self.plan.count, "fraction": self.plan.fraction,
                "seeds": self.plan.seeds(), "grid": self.grid,
                "errors": {m: [None if not math.isfinite(v) else v for v in self.errors[m]] for m in self.methods},
                "runtimes": self.runtimes, "chosen": self.chosen, "failures": self.failures,
                "summary": self.table_rows()}

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=_json_default)
        rows = self.table_rows()
        keys = list(dict.fromkeys(k for r in rows for k in r))
        with open(out / "table.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        return out


def _json_default(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"cannot serialize {type(v)}")


def _benchmark_job(data: Dataset, method: str, split: int, seed: int, fraction: float, grid: CVGrid,
                   loss: LossSpec, base: GroundMetric | None, options: CutterOptions | None):
    tr, te = split_indices(data.N, fraction, seed)
    try:
        res = run_cv(data.subset(tr), method, grid, loss, seed, base, options)
    except Exception as exc:
        return method, split, math.nan, 0.0, None, None, repr(exc)
    err = prediction_error(res.hypothesis, data.subset(te))
    return method, split, err, res.seconds, res.best, res.refit_log, None


def run_benchmark(data: Dataset, methods: Sequence[str], plan: SplitPlan, grid: CVGrid, loss: LossSpec,
                  name: str = "dataset", base: GroundMetric | None = None, jobs: int | None = 1,
                  out_dir: str | Path | None = None, options: CutterOptions | None = None) -> BenchmarkReport:
    """Cross-validate and test every method on ``plan.count`` random splits."""
    methods = list(dict.fromkeys(methods))
    for m in methods:
        grid.combos(m)
    jobs_list = [(data, m, s, seed, plan.fraction, grid, loss, base, options)
                 for s, seed in enumerate(plan.seeds()) for m in methods]
    results = _map(_benchmark_job, jobs_list, jobs)
    report = BenchmarkReport(name, dataset_hash(data), str(loss), methods, plan, grid.to_dict(),
                             {m: [math.nan] * plan.count for m in methods},
                             {m: [0.0] * plan.count for m in methods},
                             {m: [None] * plan.count for m in methods})
    logs = {}
    for m, s, err, secs, best, slog, failure in results:
        report.errors[m][s] = err
        report.runtimes[m][s] = secs
        report.chosen[m][s] = None if best is None else {k: _token(v) if k == "kappa_y" else v
                                                         for k, v in best.items()}
        if failure is not None:
            report.failures.append({"method": m, "split": s, "error": failure})
        if slog is not None:
            logs[(m, s)] = slog
    if out_dir is not None:
        out = report.write(out_dir)
        (out / "log").mkdir(exist_ok=True)
        for (m, s), slog in sorted(logs.items()):
            slog.to_csv(out / "log" / f"{m}_split{s:03d}.csv")
    return report


# ---------------------------------------------------------------- feature treatment study


@dataclass
class TreatmentCurve:
    treated_counts: list[int]
    mean_loss: list[float]
    std_loss: list[float]
    losses: np.ndarray  # (replicates, len(treated_counts))
    spearman: float

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["treated", "mean_loss", "std_loss"])
            for t, m, s in zip(self.treated_counts, self.mean_loss, self.std_loss):
                w.writerow([t, repr(m), repr(s)])


def _treatment_job(spec: SyntheticSpec, treated_counts: tuple, grid_eps: tuple, folds: int, test_size: int,
                   options: CutterOptions | None):
    inst = synthetic_instance(spec)
    test = inst.sample(test_size, np.random.default_rng(spec.seed + 10**6))
    grid = CVGrid(grid_eps, (1.0,), (0.0,), folds)
    base = GroundMetric("l1", 1.0, 1.0, 1)
    out = []
    for t in treated_counts:
        keep = range(t)
        res = run_cv(inst.train.fold_discrete(keep), "mixf", grid, spec.loss, spec.seed, base, options)
        out.append(expected_loss(res.hypothesis, test.fold_discrete(keep), spec.loss))
    return out


def run_feature_treatment_study(spec: SyntheticSpec, treated_counts: Sequence[int],
                                grid_eps: Sequence[float] = TREATMENT_EPSILONS, replicates: int = 100,
                                folds: int = 5, test_size: int = 2000, jobs: int | None = 1,
                                options: CutterOptions | None = None) -> TreatmentCurve:
    """Out-of-sample loss when only the first ``t`` discrete features are treated as discrete.

    The remaining one-hot columns become unbounded continuous features, so ``t = K``
    is the mixed-feature model and ``t = 0`` the continuous baseline.
    """
    counts = tuple(int(t) for t in treated_counts)
    if any(not 0 <= t <= spec.K for t in counts):
        raise ValueError(f"treated counts must lie in [0, {spec.K}]")
    items = [(replace(spec, seed=spec.seed + r), counts, tuple(grid_eps), folds, test_size, options)
             for r in range(replicates)]
    L = np.array(_map(_treatment_job, items, jobs), dtype=float).reshape(replicates, len(counts))
    mean = L.mean(axis=0)
    varied = len(counts) > 1 and np.ptp(mean) > 0 and len(set(counts)) > 1
    rho = float(stats.spearmanr(counts, mean).statistic) if varied else math.nan  # undefined for ties only
    return TreatmentCurve(list(counts), mean.tolist(), L.std(axis=0).tolist(), L, rho)


# ---------------------------------------------------------------- toy study

TOY_ATOMS = ((-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0))  # (z, y) in the order of FiniteSupport.toy


def toy_sample(rng: np.random.Generator, N: int = 10, agree: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    z = rng.choice((-1.0, 1.0), size=N)
    y = np.where(rng.random(N) < agree, z, -z)
    return z, y


def toy_continuous_data(z: np.ndarray, y: np.ndarray) -> Dataset:
    """The toy sample with z as one unbounded continuous feature."""
    return Dataset(np.asarray(z, dtype=float)[:, None], np.zeros((len(z), 0)), y, DiscreteSchema(), "classification")


def _conf_atoms(z: np.ndarray, y: np.ndarray, epsilon: float, kappa_y: float, loss: LossSpec,
                step: float = 0.25) -> tuple[float, np.ndarray, float]:
    """Primal worst case of the continuous model on a grid wide enough for every transport budget.

    Returns (mass off {-1, +1}, masses on the four toy atoms, mass-weighted mean |c| off the support).
    """
    N = len(z)
    reach = 1.0 + 2.0 + epsilon * N + 1.0
    grid = np.unique(np.concatenate([np.arange(-reach, reach + step / 2, step), [-1.0, 1.0]]))
    F = np.repeat(grid, 2)[:, None]
    yy = np.tile([-1.0, 1.0], grid.size)
    D = np.abs(F - F.T) + kappa_y * (yy[:, None] != yy[None, :])
    sup = FiniteSupport(F, yy, D, "classification")
    w = np.bincount(sup.locate(z[:, None], y), minlength=sup.size) / N
    _, Q = worst_case_primal(sup, w, Hypothesis(0.0, [1.0]), loss, epsilon)
    on = np.isin(F[:, 0], (-1.0, 1.0))
    atoms = np.array([Q[(F[:, 0] == a) & (yy == b)].sum() for a, b in TOY_ATOMS])
    off = float(Q[~on].sum())
    c = float(np.abs(F[~on, 0]) @ Q[~on] / off) if off > 1e-9 else math.nan
    return off, atoms, c


@dataclass
class ToyReport:
    epsilons: list[float]
    replicates: int
    empirical: np.ndarray       # (replicates,)
    mixf: np.ndarray            # (replicates, n_eps)
    conf: np.ndarray            # (replicates, n_eps)
    mixf_atoms: np.ndarray      # (replicates, n_eps, 4)
    empirical_atoms: np.ndarray  # (replicates, 4)
    conf_atoms: np.ndarray | None = None   # (replicates, n_eps, 4)
    conf_off_mass: np.ndarray | None = None
    conf_off_location: np.ndarray | None = None

    def summary(self) -> list[dict]:
        rows = []
        for j, e in enumerate(self.epsilons):
            rows.append({"epsilon": e, "empirical_mean": float(self.empirical.mean()),
                         "empirical_std": float(self.empirical.std()),
                         "mixf_mean": float(self.mixf[:, j].mean()), "mixf_std": float(self.mixf[:, j].std()),
                         "conf_mean": float(self.conf[:, j].mean()), "conf_std": float(self.conf[:, j].std())})
        return rows

    def atom_rows(self, j: int = 0) -> list[dict]:
        """Mean and std of the probability of every atom, per model, at ``epsilons[j]``."""
        names = [f"({int(a):+d},{int(b):+d})" for a, b in TOY_ATOMS]
        rows = []
        for model, P in (("empirical", self.empirical_atoms), ("mixf", self.mixf_atoms[:, j])):
            rows.extend({"model": model, "atom": n, "mean_prob": float(P[:, k].mean()),
                         "std_prob": float(P[:, k].std())} for k, n in enumerate(names))
        if self.conf_atoms is not None:
            P = self.conf_atoms[:, j]
            rows.extend({"model": "conf", "atom": n, "mean_prob": float(P[:, k].mean()),
                         "std_prob": float(P[:, k].std())} for k, n in enumerate(names))
            off = self.conf_off_mass[:, j]
            rows.append({"model": "conf", "atom": "(+-c,+-1)", "mean_prob": float(off.mean()),
                         "std_prob": float(off.std())})
        return rows

    def write(self, path: str | Path, values_path: str | Path | None = None) -> None:
        rows = []
        for j, e in enumerate(self.epsilons):
            rows.extend({"epsilon": e, **r} for r in self.atom_rows(j))
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["epsilon", "model", "atom", "mean_prob", "std_prob"],
                               lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        if values_path is not None:
            with open(values_path, "w", newline="") as fh:
                s = self.summary()
                w = csv.DictWriter(fh, fieldnames=list(s[0]), lineterminator="\n")
                w.writeheader()
                w.writerows(s)


def run_toy_study(replicates: int = 10_000, epsilons: Sequence[float] = (0.85,), seed: int = 0,
                  N: int = 10, kappa_z: float = 1.0, kappa_y: float = 1.0, conf_atoms: bool = True,
                  options: CutterOptions | None = None) -> ToyReport:
    """Empirical, mixed-feature and continuous worst-case hinge loss of beta_z = 1 on toy samples.

    A sample is determined by its four atom counts, so results are memoized on them.
    """
    loss = LossSpec("hinge")
    eps = [float(e) for e in epsilons]
    support = FiniteSupport.toy(kappa_z, kappa_y)
    h_mix = Hypothesis(0.0, [1.0], [])
    rng = np.random.default_rng(seed)
    cache: dict = {}
    emp = np.zeros(replicates)
    mix = np.zeros((replicates, len(eps)))
    con = np.zeros((replicates, len(eps)))
    mix_atoms = np.zeros((replicates, len(eps), 4))
    emp_atoms = np.zeros((replicates, 4))
    con_atoms = np.zeros((replicates, len(eps), 4)) if conf_atoms else None
    con_off = np.zeros((replicates, len(eps))) if conf_atoms else None
    con_loc = np.full((replicates, len(eps)), math.nan) if conf_atoms else None
    cfg_options = options or CutterOptions()
    for r in range(replicates):
        z, y = toy_sample(rng, N)
        data = toy_continuous_data(z, y)
        w = np.bincount(support.locate(z[:, None], y), minlength=support.size) / N
        key = tuple(np.round(w * N).astype(int))
        if key not in cache:
            ent = {"emp": float(w @ support.losses(h_mix, loss)), "mix": [], "mix_q": [], "con": [],
                   "con_atoms": [], "con_off": [], "con_loc": []}
            for e in eps:
                v, Q = worst_case_primal(support, w, h_mix, loss, e)
                ent["mix"].append(v)
                ent["mix_q"].append(Q)
                cfg = ModelConfig(loss, GroundMetric("l1", kappa_z, kappa_y, 1), e, intercept=False)
                ent["con"].append(worst_case(data, cfg, h_mix, cfg_options).objective)
                if conf_atoms:
                    off, atoms, c = _conf_atoms(z, y, e, kappa_y, loss)
                    ent["con_off"].append(off)
                    ent["con_atoms"].append(atoms)
                    ent["con_loc"].append(c)
            cache[key] = ent
        ent = cache[key]
        emp[r] = ent["emp"]
        emp_atoms[r] = w
        mix[r] = ent["mix"]
        con[r] = ent["con"]
        mix_atoms[r] = np.array(ent["mix_q"])
        if conf_atoms:
            con_atoms[r] = np.array(ent["con_atoms"])
            con_off[r] = ent["con_off"]
            con_loc[r] = ent["con_loc"]
    return ToyReport(eps, replicates, emp, mix, con, mix_atoms, emp_atoms, con_atoms, con_off, con_loc)


# ---------------------------------------------------------------- runtime comparison


def run_runtime_comparison(Ns: Sequence[int] = (500,), discrete_fractions: Sequence[float] = (0.25,),
                           losses: Sequence[LossSpec] = (LossSpec("hinge"), LossSpec("pinball", 0.5),
                                                         LossSpec("tau_insensitive", 0.01)),
                           instances: int = 1, epsilon: float = 1e-2, seed: int = 0,
                           options: CutterOptions | None = None) -> list[dict]:
    """Cutting-plane vs monolithic bounded formulation on mixed synthetic instances."""
    from .boundedcf import certify_equivalence

    rows = []
    for N, frac, loss, i in itertools.product(Ns, discrete_fractions, losses, range(instances)):
        data = runtime_instance(N, 30, frac, 4, loss, seed + i)
        cfg = ModelConfig(loss, GroundMetric("l1", 1.0, float(max(data.K, 1)), 1), epsilon)
        cert = certify_equivalence(data, cfg, options=options)
        rows.append({"N": N, "discrete_fraction": frac, "loss": str(loss), "instance": i,
                     "cut_seconds": cert["mixf_seconds"], "piece_seconds": cert["bcf_seconds"],
                     "cut_value": cert["mixf_value"], "piece_value": cert["bcf_value"], "gap": cert["gap"],
                     "iterations": cert["mixf_iterations"]})
    return rows
