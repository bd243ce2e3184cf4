"""Cutting planes vs the monolithic bounded formulation on mixed synthetic instances."""
import argparse
import csv
import statistics
from itertools import groupby
from pathlib import Path

from mixdro.harness import run_runtime_comparison
from mixdro.losses import LossSpec

LOSSES = (LossSpec("hinge"), LossSpec("pinball", 0.5), LossSpec("tau_insensitive", 0.01))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, nargs="+", default=[100, 250, 500])
    ap.add_argument("--discrete-fractions", type=float, nargs="+", default=[0.25, 0.5, 0.75])
    ap.add_argument("--instances", type=int, default=3)
    ap.add_argument("--epsilon", type=float, default=1e-2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/runtime.csv")
    args = ap.parse_args()
    rows = run_runtime_comparison(args.N, args.discrete_fractions, LOSSES, args.instances, args.epsilon, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    key = lambda r: (r["loss"], r["N"], r["discrete_fraction"])  # noqa: E731
    print(f"{'loss':>22} {'N':>5} {'disc':>5} {'cut_s':>8} {'piece_s':>8} {'speedup':>8}")
    for (loss, N, frac), grp in groupby(sorted(rows, key=key), key):
        grp = list(grp)
        cut = statistics.median(r["cut_seconds"] for r in grp)
        piece = statistics.median(r["piece_seconds"] for r in grp)
        print(f"{loss:>22} {N:5d} {frac:5.2f} {cut:8.3f} {piece:8.3f} {piece / cut:8.1f}")


if __name__ == "__main__":
    main()
