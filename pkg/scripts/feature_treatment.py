"""Out-of-sample loss as more of the discrete features are treated as discrete."""
import argparse
from pathlib import Path

from mixdro.harness import SyntheticSpec, run_feature_treatment_study
from mixdro.losses import LossSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--loss", default="hinge")
    ap.add_argument("--param", type=float, default=None)
    ap.add_argument("--N", type=int, default=20)
    ap.add_argument("--K", type=int, default=20)
    ap.add_argument("--Mx", type=int, default=0)
    ap.add_argument("--replicates", type=int, default=100)
    ap.add_argument("--step", type=int, default=2, help="spacing of the treated counts")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=0)
    ap.add_argument("--out", default="results/treatment.csv")
    args = ap.parse_args()
    spec = SyntheticSpec(args.N, args.Mx, args.K, 2, LossSpec(args.loss, args.param), args.seed)
    counts = sorted(set(range(0, args.K + 1, args.step)) | {args.K})
    curve = run_feature_treatment_study(spec, counts, replicates=args.replicates, jobs=args.jobs)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    curve.write_csv(args.out)
    for t, m, s in zip(curve.treated_counts, curve.mean_loss, curve.std_loss):
        print(f"treated={t:3d} loss={m:.4f} +- {s:.4f}")
    print(f"spearman(treated, loss)={curve.spearman:.3f}")


if __name__ == "__main__":
    main()
