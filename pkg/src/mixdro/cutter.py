"""Cutting-plane training: solve the master, add one most-violated cut per sample, repeat."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .conic import SolverError, SolverSettings, solve
from .core import Dataset, Hypothesis
from .master import (ActiveCutSet, MasterMap, ModelConfig, build_master, fold_hypothesis,
                     objective, oracle_inputs, prepare, seed_cuts, unfold_hypothesis)
from .oracle import most_violated_batch

log = logging.getLogger(__name__)

SAFEGUARD_BOUND = 1e4


@dataclass
class IterationRecord:
    iter: int
    lb: float
    ub: float
    relaxation: float
    cuts: int
    master_ms: float
    oracle_ms: float


@dataclass
class SolveLog:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = "running"
    safeguard: bool = False
    inaccurate: int = 0  # master solves accepted at reduced accuracy

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_csv(self, path: str | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "lb", "ub", "cuts", "master_ms", "oracle_ms"])
        for r in self.records:
            w.writerow([r.iter, repr(r.lb), repr(r.ub), r.cuts, f"{r.master_ms:.3f}", f"{r.oracle_ms:.3f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass
class CutterOptions:
    tolerance: float = 1e-6
    max_iter: int = 500
    time_limit: float = math.inf
    initial_cuts: str | ActiveCutSet = "seed"  # "seed", "empty" or an explicit set
    solver: SolverSettings = field(default_factory=SolverSettings)


@dataclass
class TrainResult:
    hypothesis: Hypothesis
    log: SolveLog
    objective: float      # the final upper bound
    lower_bound: float
    lam: float
    cuts: ActiveCutSet
    x: np.ndarray = field(repr=False, default=None)
    mmap: MasterMap = field(repr=False, default=None)
    program: object = field(repr=False, default=None)

    def __iter__(self):
        return iter((self.hypothesis, self.log))


def _initial(data: Dataset, config: ModelConfig, options: CutterOptions) -> ActiveCutSet:
    if isinstance(options.initial_cuts, ActiveCutSet):
        return options.initial_cuts.copy()
    if options.initial_cuts == "empty":
        return ActiveCutSet(prepare(data, config)[0].Mz)
    if options.initial_cuts == "seed":
        return seed_cuts(data, config)
    raise ValueError(f"unknown initial cut option {options.initial_cuts!r}")


def most_violated_cuts(data: Dataset, config: ModelConfig, mmap: MasterMap, x: np.ndarray):
    """For every sample the group with the largest violation, its z and the violation."""
    sigma = x[mmap.s]
    best_v = np.full(data.N, -np.inf)
    best_i = np.zeros(data.N, dtype=int)
    best_z = np.array(data.Z, copy=True)
    for gi in range(len(mmap.groups)):
        f, W, w0, hc, lkz = oracle_inputs(data, config, mmap, x, gi)
        Z, v, _ = most_violated_batch(f, W, w0, data.Z, hc, lkz, config.metric.p, sigma, data.schema)
        better = v > best_v
        best_v[better], best_i[better], best_z[better] = v[better], gi, Z[better]
    return best_i, best_z, best_v


def _run(data: Dataset, config: ModelConfig, options: CutterOptions,
         fixed: Hypothesis | None) -> TrainResult:
    cuts = _initial(data, config, options)
    data, config = prepare(data, config)
    log_ = SolveLog()
    lb, ub = -math.inf, math.inf
    incumbent = None
    t_start = time.perf_counter()
    prog = mmap = None
    for it in range(1, options.max_iter + 1):
        t0 = time.perf_counter()
        prog, mmap = build_master(data, config, cuts, fixed)
        res = solve(prog, options.solver)
        t1 = time.perf_counter()
        if res.status == "infeasible":
            raise SolverError(f"master infeasible at iteration {it} (builder bug)", res)
        # reduced accuracy is only accepted once the variables are bounded
        if not (res.ok or (res.usable and config.bound is not None)):
            raise SolverError(f"master solve failed at iteration {it}: {res.status} "
                              f"{res.diagnostics.get('backend_status', '')}", res)
        log_.inaccurate += not res.ok
        x = res.x
        sigma = x[mmap.s]
        bi, bz, bv = most_violated_cuts(data, config, mmap, x)
        theta = np.maximum(bv, 0.0)
        relax = objective(config, mmap, x, sigma)
        # an interior-point primal value may sit above the master optimum by the solver gap;
        # the dual value does not
        lb = max(lb, min(relax, res.diagnostics.get("dual_objective", relax)))
        cand = objective(config, mmap, x, sigma + theta)
        if cand < ub:
            ub, incumbent = cand, x
        threshold = 1e-8 * max(1.0, abs(ub))
        added = 0
        for n in np.nonzero(bv > threshold)[0]:
            added += cuts.add(n, bi[n], bz[n])
        t2 = time.perf_counter()
        log_.records.append(IterationRecord(it, lb, ub, relax, added, 1e3 * (t1 - t0), 1e3 * (t2 - t1)))
        gap = ub - lb
        tol = options.tolerance * max(1.0, abs(ub))
        # with no violated cut left the incumbent is feasible, and what remains of the gap
        # is the master solver's own primal-dual gap
        if gap <= tol or (added == 0 and ub - relax <= tol):
            log_.status = "converged"
            break
        if added == 0:
            log.warning("no new cuts but gap %.3g exceeds tolerance; stopping", gap)
            log_.status = "stalled"
            break
        if time.perf_counter() - t_start > options.time_limit:
            log_.status = "time_limit"
            break
    else:
        log_.status = "iteration_limit"
    hyp = mmap.hypothesis(incumbent)
    return TrainResult(hyp, log_, ub, lb, float(max(incumbent[mmap.lam], 0.0)), cuts, incumbent, mmap, prog)


def train(data: Dataset, config: ModelConfig, options: CutterOptions | None = None,
          fixed: Hypothesis | None = None) -> TrainResult:
    """Cutting-plane solve of the learning problem (or the worst case at ``fixed``)."""
    options = options or CutterOptions()
    try:
        result = _run(data, config, options, fixed)
    except SolverError as exc:
        status = exc.result.status if exc.result is not None else ""
        if config.bound is not None or status not in ("unbounded", "numeric_limit", "iteration_limit", "inaccurate"):
            raise
        log.warning("%s; retrying with variable bound %g", exc, SAFEGUARD_BOUND)
        result = _run(data, replace(config, bound=SAFEGUARD_BOUND), options, fixed)
        result.log.safeguard = True
    if config.mode == "continuous_baseline":
        result.hypothesis = unfold_hypothesis(result.hypothesis, data)
    return result


def worst_case(data: Dataset, config: ModelConfig, hypothesis: Hypothesis,
               options: CutterOptions | None = None) -> TrainResult:
    """Worst-case expected loss at a fixed hypothesis (value in ``.objective``, lambda in ``.lam``)."""
    hypothesis.check(data)
    fixed = fold_hypothesis(hypothesis) if config.mode == "continuous_baseline" else hypothesis
    return train(data, config, options, fixed=fixed)


def evaluate_worst_case(data: Dataset, config: ModelConfig, hypothesis: Hypothesis,
                        options: CutterOptions | None = None) -> float:
    return worst_case(data, config, hypothesis, options).objective
