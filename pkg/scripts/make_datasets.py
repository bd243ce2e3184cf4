"""Write the built-in benchmark datasets as CSV plus schema JSON."""
import argparse
from pathlib import Path

from mixdro.dataio import dataset_hash, write_csv, write_schema
from mixdro.datasets import BUILTIN, load_builtin


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="data", help="destination directory")
    ap.add_argument("names", nargs="*", default=sorted(BUILTIN), help="datasets to write (default: all)")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.names:
        data = load_builtin(name)
        write_csv(data, out / f"{name}.csv")
        write_schema(data, out / f"{name}.schema.json")
        print(f"{name}: N={data.N} Mx={data.Mx} K={data.K} Mz={data.Mz} task={data.task} "
              f"hash={dataset_hash(data)[:12]}")


if __name__ == "__main__":
    main()
