"""Balanced accuracy of every classification combiner on the synthetic task archetypes.

Usage: python3 scripts/compare_methods.py [--seeds 5] [--labels 0.1] [--max-n 5000]
"""

import argparse
import dataclasses

import numpy as np

from stacknet.archetypes import ARCHETYPES
from stacknet.experiment import ExperimentConfig, run_experiment

UNSUPERVISED = ["voting", "wawa", "dawid-skene", "spectral", "u-stackingnet"]
SUPERVISED = ["log-odds-voting", "s-stackingnet"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--labels", type=float, default=0.1)
    ap.add_argument("--max-n", type=int, default=5000, help="cap pool size for speed")
    args = ap.parse_args()

    methods = ["base-worst", "base-best", *UNSUPERVISED, *SUPERVISED]
    print(f"{'method':<18}" + "".join(f"{a.name[:10]:>12}" for a in ARCHETYPES))
    for method in methods:
        cells = []
        for a in ARCHETYPES:
            if method == "spectral" and a.n_classes > 2:
                cells.append(f"{'n/a':>12}")
                continue
            spec = a.spec(0, min(a.n_samples, args.max_n))
            cfg = ExperimentConfig(
                method=method,
                synthetic=spec,
                seeds=tuple(range(args.seeds)),
                labels_fraction=args.labels if method in SUPERVISED else 0.0,
            )
            res = run_experiment(cfg)
            cells.append(f"{res.mean:>7.2f}±{res.std:<4.2f}")
        print(f"{method:<18}" + "".join(cells))


if __name__ == "__main__":
    main()
