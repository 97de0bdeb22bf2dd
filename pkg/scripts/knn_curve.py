"""k-vs-AUC curves of the weighted-KNN probe for each training method, averaged
over folds, written as CSV (one column per method).

    python3 scripts/knn_curve.py --out runs/knn_curve.csv
"""
import argparse
import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from mvcon.dataset import SynthConfig, generate_synthetic
from mvcon.evaluation import default_k_grid
from mvcon.pairing import PairVariant
from mvcon.trainer import TrainConfig, cross_validate

METHODS = {
    "baseline": TrainConfig(alpha=0.0, contrastive=False),
    "IR": TrainConfig(variant=PairVariant.IR),
    "LR": TrainConfig(variant=PairVariant.LR),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/knn_curve.csv")
    args = ap.parse_args()

    data = generate_synthetic(SynthConfig(seed=args.seed))
    ks = tuple(default_k_grid(200, 12))
    curves = {}
    for name, cfg in METHODS.items():
        res = cross_validate(data, replace(cfg, seed=args.seed, epochs=args.epochs, knn_ks=ks),
                             args.folds, jobs=args.jobs)
        curves[name] = np.mean([[auc for _, auc in f["knn"]] for f in res.folds], axis=0)
        print(name, " ".join(f"{k}:{a:.3f}" for k, a in zip(ks, curves[name])))

    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", *curves])
        for i, k in enumerate(ks):
            w.writerow([k, *(repr(float(c[i])) for c in curves.values())])


if __name__ == "__main__":
    main()
