"""Pilot for the end-to-end accuracy floor: cross-validated accuracy of a
least-squares linear classifier on raw views, per seed. The floor used by the
acceptance suite (0.85) sits well below what this reference reaches.

    python3 scripts/calibrate_linear_oracle.py --seeds 0 1 2
"""
import argparse
import sys
from pathlib import Path

from mvcon.dataset import SynthConfig, generate_synthetic

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import linear_oracle_accuracy  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--separation", type=float, default=6.0)
    ap.add_argument("--noise", type=float, default=0.5)
    args = ap.parse_args()
    for seed in args.seeds:
        data = generate_synthetic(SynthConfig(class_separation=args.separation,
                                              view_noise_sigma=args.noise, seed=seed))
        print(f"seed {seed}: linear accuracy {linear_oracle_accuracy(data, seed=seed):.4f}")


if __name__ == "__main__":
    main()
