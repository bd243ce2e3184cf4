"""Repeated train/test benchmark on the built-in datasets with per-split cross-validation."""
import argparse
from pathlib import Path

from mixdro.datasets import load_builtin
from mixdro.harness import METHODS, CVGrid, SplitPlan, run_benchmark
from mixdro.losses import LossSpec

RUNS = {
    "balance-scale": ("logloss", "hinge"),
    "tic-tac-toe": ("logloss", "hinge"),
    "imports": ("huber", "pinball", "tau_insensitive"),
}
PARAMS = {"huber": 0.5, "pinball": 0.5, "tau_insensitive": 0.01}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--datasets", nargs="+", default=list(RUNS), choices=list(RUNS))
    ap.add_argument("--losses", nargs="+", default=None, help="restrict to these loss kinds")
    ap.add_argument("--methods", nargs="+", default=list(METHODS), choices=list(METHODS))
    ap.add_argument("--splits", type=int, default=20)
    ap.add_argument("--full", action="store_true", help="100 splits")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=0, help="worker processes (0 = available cores)")
    ap.add_argument("--out-dir", default="results/uci")
    args = ap.parse_args()
    plan = SplitPlan(100 if args.full else args.splits, 0.8, args.seed)
    for name in args.datasets:
        data = load_builtin(name)
        for kind in RUNS[name]:
            if args.losses and kind not in args.losses:
                continue
            loss = LossSpec(kind, PARAMS.get(kind))
            out = Path(args.out_dir) / f"{name}_{kind}"
            rep = run_benchmark(data, args.methods, plan, CVGrid(), loss, name, jobs=args.jobs, out_dir=out)
            scale = 100.0 if data.task == "classification" else 1.0
            unit = "% error" if data.task == "classification" else "MSE (scaled output)"
            print(f"{name} / {loss}: {unit}")
            for row in rep.table_rows():
                print(f"  {row['method']:>7} {scale * row['mean_error']:10.4f} +- {scale * row['std_error']:.4f}"
                      f"  ({row['mean_runtime_s']:.2f}s per split, {row['splits_ok']} ok)")


if __name__ == "__main__":
    main()
