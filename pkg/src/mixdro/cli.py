"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure,
4 iteration/time limit reached (partial output is still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .conic import SolverError, SolverSettings
from .core import Dataset, GroundMetric, Hypothesis, parse_kappa
from .cutter import CutterOptions, TrainResult, train, worst_case
from .dataio import (DataError, EncodeOptions, Encoding, load_csv, read_schema, write_csv, write_schema)
from .datasets import BUILTIN, load_builtin
from .losses import KINDS, LossSpec, eval_loss
from .master import MODES, ModelConfig

log = logging.getLogger("mixdro")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER, EXIT_LIMIT = 0, 1, 2, 3, 4
MODEL_FORMAT = "mixdro-model"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- argument groups


def _data_args(p, output=True):
    g = p.add_argument_group("data")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--data", help="CSV file with a header row")
    src.add_argument("--dataset", choices=sorted(BUILTIN), help="built-in benchmark dataset")
    g.add_argument("--schema", help="schema JSON declaring discrete/continuous columns and the output")
    if output:
        g.add_argument("--output-column", help="output column when no schema is given (default: last column)")
        g.add_argument("--task", choices=("classification", "regression"), help="override the inferred task")
        g.add_argument("--positive", nargs="+", metavar="LEVEL",
                       help="classification output levels mapped to +1 (others to -1)")
        g.add_argument("--drop", nargs="+", default=[], metavar="COLUMN", help="columns to ignore")
        g.add_argument("--minmax", action="store_true", help="min-max scale the continuous features")


def _model_args(p):
    g = p.add_argument_group("model")
    g.add_argument("--loss", choices=KINDS, help="loss function")
    g.add_argument("--huber-delta", type=float, default=None, help="huber threshold delta (default 1)")
    g.add_argument("--tau", type=float, default=None,
                   help="pinball quantile or tau-insensitive width (defaults 0.5 and 0)")
    g.add_argument("--epsilon", type=float, default=0.0, help="Wasserstein radius")
    g.add_argument("--kappa-z", type=float, default=1.0, help="cost of changing one discrete feature")
    g.add_argument("--kappa-y", default="inf", help="label cost: a number, 'inf' or 'K'")
    g.add_argument("--p", type=float, default=1.0, help="exponent of the discrete distance")
    g.add_argument("--norm", choices=("l1", "l2", "linf"), default="l1", help="norm on continuous features")
    g.add_argument("--alpha", type=float, default=0.0, help="ridge penalty weight")
    g.add_argument("--mode", choices=MODES, default="mixed",
                   help="mixed: discrete support; continuous_baseline: one-hot columns as unbounded reals")
    g.add_argument("--no-intercept", action="store_true", help="fix beta0 = 0")


def _solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--tolerance", type=float, default=1e-6, help="relative gap of the cutting-plane loop")
    g.add_argument("--max-iter", type=int, default=500, help="cutting-plane iteration limit")
    g.add_argument("--time-limit", type=float, default=math.inf, help="wall-clock limit in seconds")
    g.add_argument("--solver-tol", type=float, default=None,
                   help="backend tolerance (default 1e-8; env MIXDRO_SOLVER_TOL)")
    g.add_argument("--backend", choices=("auto", "clarabel", "highs"), default="auto",
                   help="master solver; auto uses HiGHS for LPs and Clarabel otherwise")


def _grid_args(p):
    g = p.add_argument_group("grid")
    g.add_argument("--epsilons", type=float, nargs="+", default=None, help="candidate radii")
    g.add_argument("--kappa-ys", nargs="+", default=None, help="candidate label costs (numbers, K, inf)")
    g.add_argument("--alphas", type=float, nargs="+", default=None, help="candidate ridge weights")
    g.add_argument("--folds", type=int, default=5, help="cross-validation folds")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixdro", description="Wasserstein distributionally robust learning with mixed features.")
    p.add_argument("--version", action="version", version=f"mixdro {__version__}")
    p.add_argument("--seed", type=int, default=0, help="seed of every random choice")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (0 = available cores)")
    p.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model and write it as JSON")
    _data_args(t); _model_args(t); _solver_args(t)
    t.add_argument("--out", help="model JSON path")
    t.add_argument("--log", help="per-iteration CSV log path")
    t.add_argument("--dump-program", metavar="PATH", help="write the final master program listing")

    e = sub.add_parser("evaluate", help="worst-case and empirical loss of a saved model")
    e.add_argument("--model", required=True, help="model JSON written by train or cv")
    _data_args(e); _model_args(e); _solver_args(e)
    e.add_argument("--out", help="JSON result path")

    c = sub.add_parser("cv", help="cross-validate one method and refit")
    _data_args(c); _model_args(c); _solver_args(c); _grid_args(c)
    c.add_argument("--method", choices=("nom", "mixf", "r_nom", "r_mixf", "conf"), default="mixf",
                   help="method whose grid is searched")
    c.add_argument("--out", help="model JSON path")

    b = sub.add_parser("benchmark", help="repeated train/test splits with cross-validation per method")
    _data_args(b); _model_args(b); _solver_args(b); _grid_args(b)
    b.add_argument("--methods", nargs="+", default=["nom", "mixf", "r_nom", "r_mixf", "conf"],
                   help="methods to compare")
    b.add_argument("--splits", type=int, default=20, help="number of random train/test splits")
    b.add_argument("--full", action="store_true", help="100 splits")
    b.add_argument("--fraction", type=float, default=0.8, help="training fraction of each split")
    b.add_argument("--out-dir", required=True, help="directory for per-split results and the report")

    m = sub.add_parser("compare", help="cutting planes vs the monolithic bounded formulation vs the baseline")
    _data_args(m); _model_args(m); _solver_args(m)
    m.add_argument("--gap-tol", type=float, default=1e-5, help="relative gap accepted as agreement")

    y = sub.add_parser("toy", help="the four-atom toy study")
    y.add_argument("--replicates", type=int, default=10_000, help="number of sampled training sets")
    y.add_argument("--epsilon", type=float, nargs="+", default=[0.85], help="Wasserstein radii")
    y.add_argument("--samples", type=int, default=10, help="points per training set")
    y.add_argument("--out", required=True, help="atom probability CSV")
    y.add_argument("--values-out", help="worst-case value CSV")

    r = sub.add_parser("predict", help="apply a saved model to a CSV file")
    r.add_argument("--model", required=True, help="model JSON written by train or cv")
    r.add_argument("--data", required=True, help="CSV with the model's feature columns")
    r.add_argument("--schema", help="schema JSON of the data; must match the model's")
    r.add_argument("--out", help="predictions CSV (default: stdout)")

    d = sub.add_parser("dataset", help="write a built-in dataset as CSV plus schema JSON")
    d.add_argument("name", choices=sorted(BUILTIN), help="built-in dataset name")
    d.add_argument("--out-dir", required=True, help="directory for the CSV and schema JSON")
    return p


# ---------------------------------------------------------------- resolution helpers


def solver_settings(args) -> SolverSettings:
    tol = args.solver_tol
    if tol is None and os.environ.get("MIXDRO_SOLVER_TOL"):
        try:
            tol = float(os.environ["MIXDRO_SOLVER_TOL"])
        except ValueError:
            raise UsageError(f"MIXDRO_SOLVER_TOL={os.environ['MIXDRO_SOLVER_TOL']!r} is not a number") from None
    return SolverSettings(tolerance=1e-8 if tol is None else tol, time_limit=args.time_limit,
                          backend=args.backend)


def cutter_options(args) -> CutterOptions:
    return CutterOptions(args.tolerance, args.max_iter, args.time_limit, "seed", solver_settings(args))


def loss_spec(args) -> LossSpec:
    if args.loss is None:
        raise UsageError("--loss is required")
    if args.huber_delta is not None and args.loss != "huber":
        raise UsageError("--huber-delta only applies to --loss huber")
    if args.tau is not None and args.loss not in ("pinball", "tau_insensitive"):
        raise UsageError("--tau only applies to pinball and tau_insensitive")
    param = args.huber_delta if args.loss == "huber" else args.tau
    return LossSpec(args.loss, param)


def model_config(args, data: Dataset) -> ModelConfig:
    loss = loss_spec(args)
    metric = GroundMetric(args.norm, args.kappa_z, parse_kappa(args.kappa_y, data.K), args.p)
    return ModelConfig(loss, metric, args.epsilon, ridge_alpha=args.alpha, mode=args.mode,
                       intercept=not args.no_intercept)


def load_data(args, schema_doc: dict | None = None) -> Dataset:
    if getattr(args, "dataset", None):
        return load_builtin(args.dataset)
    if not getattr(args, "data", None):
        raise UsageError("give --data or --dataset")
    schema = schema_doc if schema_doc is not None else args.schema
    table = load_csv(args.data, schema, output=getattr(args, "output_column", None),
                     task=getattr(args, "task", None), drop=getattr(args, "drop", []) or [])
    opts = EncodeOptions(positive=getattr(args, "positive", None), minmax_x=getattr(args, "minmax", False))
    from .dataio import encode
    return encode(table, opts)


def _resolved(args, extra: dict | None = None) -> dict:
    d = {k: (v if not (isinstance(v, float) and math.isinf(v)) else "inf") for k, v in vars(args).items()}
    d.update(extra or {})
    return d


def model_document(data: Dataset, config: ModelConfig, res: TrainResult) -> dict:
    """Model JSON; deliberately free of timings so identical runs give identical files."""
    enc = data.encoding if isinstance(data.encoding, Encoding) else None
    doc = enc.document() if enc is not None else None
    from .core import schema_document, schema_hash
    doc = doc or schema_document(data)
    return {"format": MODEL_FORMAT, "version": 1,
            "hypothesis": res.hypothesis.to_dict(),
            "schema": doc, "schema_hash": schema_hash(doc),
            "encoding": None if enc is None else enc.to_dict(),
            "loss": config.loss.to_dict(), "metric": config.metric.to_dict(), "epsilon": config.epsilon,
            "config": config.to_dict(),
            "objective": res.objective, "lower_bound": res.lower_bound, "lambda": res.lam,
            "status": res.log.status, "iterations": res.log.iterations, "safeguard": res.log.safeguard}


def read_model(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"model {path} is not valid JSON: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path} is not a {MODEL_FORMAT} file")
    return doc


def _write_json(obj, path: str | None):
    text = json.dumps(obj, indent=2, default=lambda v: None if isinstance(v, float) else str(v))
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _limit_code(status: str) -> int:
    return EXIT_LIMIT if status in ("iteration_limit", "time_limit", "stalled") else EXIT_OK


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    data = load_data(args)
    config = model_config(args, data)
    config.check(data)
    log.info("config %s", json.dumps(_resolved(args, {"resolved": config.to_dict()}), default=str))
    t0 = time.perf_counter()
    res = train(data, config, cutter_options(args))
    secs = time.perf_counter() - t0
    doc = model_document(data, config, res)
    if args.out:
        _write_json(doc, args.out)
    if args.log:
        res.log.to_csv(args.log)
    if args.dump_program and res.program is not None:
        res.program.dump(args.dump_program)
    print(f"status={res.log.status} objective={res.objective:.10g} lower_bound={res.lower_bound:.10g} "
          f"iterations={res.log.iterations} seconds={secs:.3f}")
    return _limit_code(res.log.status)


def _model_hypothesis(doc: dict) -> Hypothesis:
    return Hypothesis.from_dict(doc["hypothesis"])


def cmd_evaluate(args) -> int:
    model = read_model(args.model)
    data = load_data(args, None if args.schema or args.dataset else model["schema"])
    if args.loss is None:
        args.loss = model["loss"]["kind"]
        param = model["loss"].get("param")
        if args.loss == "huber" and args.huber_delta is None:
            args.huber_delta = param
        if args.loss in ("pinball", "tau_insensitive") and args.tau is None:
            args.tau = param
    config = model_config(args, data)
    h = _model_hypothesis(model)
    h.check(data)
    res = worst_case(data, config, h, cutter_options(args))
    s = h.score(data)
    e = data.y * s if data.task == "classification" else s - data.y
    from .harness import prediction_error
    out = {"worst_case": res.objective, "lower_bound": res.lower_bound, "lambda": res.lam,
           "empirical_loss": float(np.mean(eval_loss(config.loss, e))),
           "error": prediction_error(h, data), "status": res.log.status, "epsilon": config.epsilon}
    _write_json(out, args.out)
    return _limit_code(res.log.status)


def _grid(args, K: int):
    from .harness import DEFAULT_ALPHAS, DEFAULT_EPSILONS, DEFAULT_KAPPA_YS, CVGrid
    kys = tuple(args.kappa_ys) if args.kappa_ys else DEFAULT_KAPPA_YS
    for k in kys:
        parse_kappa(k, max(K, 1))
    return CVGrid(tuple(args.epsilons) if args.epsilons else DEFAULT_EPSILONS, kys,
                  tuple(args.alphas) if args.alphas else DEFAULT_ALPHAS, args.folds)


def _base_metric(args) -> GroundMetric:
    return GroundMetric(args.norm, args.kappa_z, 1.0, args.p)


def cmd_cv(args) -> int:
    from .harness import _token, method_config, run_cv
    data = load_data(args)
    loss = loss_spec(args)
    grid = _grid(args, data.K)
    log.info("config %s", json.dumps(_resolved(args, {"grid": grid.to_dict()}), default=str))
    res = run_cv(data, args.method, grid, loss, args.seed, _base_metric(args), cutter_options(args))
    config = method_config(args.method, res.best, loss, data.K, _base_metric(args))
    fit = train(data, config, cutter_options(args))
    doc = model_document(data, config, fit)
    tokens = lambda c: {k: _token(v) if k == "kappa_y" else v for k, v in c.items()}  # noqa: E731
    doc["cv"] = {"method": args.method, "best": tokens(res.best),
                 "scores": [[tokens(c), s] for c, s in res.scores]}
    if args.out:
        _write_json(doc, args.out)
    print(f"best={json.dumps(doc['cv']['best'])} objective={fit.objective:.10g}")
    return _limit_code(fit.log.status)


def cmd_benchmark(args) -> int:
    from .harness import SplitPlan, run_benchmark
    data = load_data(args)
    loss = loss_spec(args)
    grid = _grid(args, data.K)
    plan = SplitPlan(100 if args.full else args.splits, args.fraction, args.seed)
    name = args.dataset or Path(args.data).stem
    log.info("config %s", json.dumps(_resolved(args, {"grid": grid.to_dict()}), default=str))
    rep = run_benchmark(data, args.methods, plan, grid, loss, name, _base_metric(args), args.jobs,
                        args.out_dir, cutter_options(args))
    for row in rep.table_rows():
        print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    if rep.failures:
        log.warning("%d split/method runs failed; see report.json", len(rep.failures))
        return EXIT_LIMIT
    return EXIT_OK


def cmd_compare(args) -> int:
    from .boundedcf import certify_equivalence
    data = load_data(args)
    config = model_config(args, data)
    config.check(data)
    log.info("config %s", json.dumps(_resolved(args, {"resolved": config.to_dict()}), default=str))
    cert = certify_equivalence(data, config, args.gap_tol, cutter_options(args))
    t0 = time.perf_counter()
    conf = train(data, replace(config, mode="continuous_baseline"), cutter_options(args))
    cert["conf_value"] = conf.objective
    cert["conf_seconds"] = time.perf_counter() - t0
    print(f"mixf_value={cert['mixf_value']:.10g} bcf_value={cert['bcf_value']:.10g} gap={cert['gap']:.3g} "
          f"passed={cert['passed']}")
    print(f"mixf_seconds={cert['mixf_seconds']:.3f} bcf_seconds={cert['bcf_seconds']:.3f} "
          f"conf_value={cert['conf_value']:.10g} conf_seconds={cert['conf_seconds']:.3f}")
    return EXIT_OK if cert["passed"] else EXIT_SOLVER


def cmd_toy(args) -> int:
    from .harness import run_toy_study
    if args.replicates < 1 or args.samples < 1:
        raise UsageError("--replicates and --samples must be positive")
    rep = run_toy_study(args.replicates, args.epsilon, args.seed, args.samples)
    rep.write(args.out, args.values_out)
    for row in rep.summary():
        print(", ".join(f"{k}={v:.6g}" for k, v in row.items()))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = read_model(args.model)
    if args.schema:
        from .core import schema_hash
        doc = read_schema(args.schema)
        if schema_hash(doc) != model["schema_hash"]:
            raise DataError("schema of the data does not match the model's schema")
    enc = Encoding.from_dict(model["encoding"]) if model.get("encoding") else None
    if enc is None:
        raise DataError("the model carries no encoding; it was trained on in-memory data")
    table = load_csv(args.data, model["schema"], require_output=False)
    X, Z = enc.features(table)
    h = _model_hypothesis(model)
    if h.beta_x.size != X.shape[1] or h.beta_z.size != Z.shape[1]:
        raise DataError("model dimensions do not match the data")
    score = h.beta0 + X @ h.beta_x + Z @ h.beta_z
    if enc.task == "classification":
        signed = np.where(score >= 0, 1.0, -1.0)
        pred = enc.decode_y(signed)
    else:
        signed = score
        pred = enc.decode_y(score)
    buf = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["prediction", "score"])
        for p_, s_ in zip(pred, score):
            w.writerow([p_ if enc.task == "classification" else repr(float(p_)), repr(float(s_))])
    finally:
        if args.out:
            buf.close()
    if table.output is not None:
        y = enc.encode_y(table.column(enc.output))
        if enc.task == "classification":
            print(f"error={np.mean(signed != y):.6g} n={len(y)}", file=sys.stderr)
        else:
            raw = enc.decode_y(y)
            print(f"mse_scaled={np.mean((signed - y) ** 2):.6g} mse={np.mean((pred - raw) ** 2):.6g} n={len(y)}",
                  file=sys.stderr)
    return EXIT_OK


def cmd_dataset(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = load_builtin(args.name)
    write_csv(data, out / f"{args.name}.csv")
    write_schema(data, out / f"{args.name}.schema.json")
    print(f"wrote {out / (args.name + '.csv')} ({data.N} rows)")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "cv": cmd_cv, "benchmark": cmd_benchmark,
            "compare": cmd_compare, "toy": cmd_toy, "predict": cmd_predict, "dataset": cmd_dataset}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="mixdro: %(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # remaining ValueErrors come from validating user-supplied settings or data
        kind = "data error" if args.command in ("predict",) else "error"
        print(f"{kind}: {exc}", file=sys.stderr)
        return EXIT_DATA if kind == "data error" else EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_LIMIT


if __name__ == "__main__":
    sys.exit(main())
