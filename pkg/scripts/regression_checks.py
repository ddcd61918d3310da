"""Regression combiners on synthetic pools: averaging gain, optimal weights,
and how little labeled data the trainable combiner needs."""

import argparse

import numpy as np

from stacknet.core import LabeledSubset
from stacknet.metrics import mae, mse
from stacknet.regression import (
    estimate_error_covariance,
    optimal_weights_covariance,
    stacking_regression_predict,
    stacking_regression_train,
    uniform_average,
)
from stacknet.synthetic import SyntheticPoolSpec, generate_synthetic


def averaging_gain():
    print("uniform averaging, i.i.d. noise sd 0.1")
    for m in (1, 2, 5, 10, 20):
        table, y = generate_synthetic(SyntheticPoolSpec(100_000, m, None, (0.01,) * m, constant_truth=0.5, seed=m))
        single = np.mean([mse(table.values[:, j], y) for j in range(m)])
        print(f"  M={m:<3} ensemble MSE {mse(uniform_average(table), y):.6f}  mean single / M {single / m:.6f}")


def label_budget(seeds):
    variances = (0.005, 0.01, 0.02, 0.04, 0.08, 0.005, 0.01, 0.02, 0.04, 0.08)
    print("\nMAE against labeled fraction (N=5000, clipped pool)")
    print(f"  {'fraction':<10}{'uniform':>9}{'optimal':>9}{'stacking':>10}")
    for frac in (0.002, 0.01, 0.05, 0.1, 0.2):
        res = []
        for seed in range(seeds):
            table, y = generate_synthetic(SyntheticPoolSpec(5000, 10, None, variances, seed=seed, clip=True))
            n = max(2, int(frac * 5000))
            idx = np.sort(np.random.default_rng([seed, 1]).choice(5000, n, replace=False))
            labels = LabeledSubset(idx, y[idx])
            rest = np.setdiff1d(np.arange(5000), idx)
            opt = optimal_weights_covariance(estimate_error_covariance(table, labels))
            stack = stacking_regression_train(table, labels)
            res.append((
                mae(uniform_average(table)[rest], y[rest]),
                mae(np.clip(table.values @ opt.weights, 0, 1)[rest], y[rest]),
                mae(stacking_regression_predict(table, stack)[rest], y[rest]),
            ))
        u, o, s = np.mean(res, axis=0)
        print(f"  {frac:<10}{u:>9.4f}{o:>9.4f}{s:>10.4f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    averaging_gain()
    label_budget(args.seeds)


if __name__ == "__main__":
    main()
