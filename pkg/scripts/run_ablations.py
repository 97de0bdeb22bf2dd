"""Negative-set and alpha ablations of LR training on the synthetic benchmark.

    python3 scripts/run_ablations.py --axis negatives alpha --out runs/ablations
"""
import argparse
from pathlib import Path

from mvcon.dataset import SynthConfig, generate_synthetic
from mvcon.trainer import ABLATION_AXES, TrainConfig, run_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--axis", nargs="+", choices=ABLATION_AXES, default=["negatives", "alpha"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/ablations")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    data = generate_synthetic(SynthConfig(seed=args.seed))
    base = TrainConfig(seed=args.seed, epochs=args.epochs)
    for axis in args.axis:
        table = run_ablation(data, base, axis, fold_count=args.folds, jobs=args.jobs)
        print(table.format())
        (out / f"{axis}.txt").write_text(table.format() + "\n")
        (out / f"{axis}.json").write_text(table.to_json())


if __name__ == "__main__":
    main()
