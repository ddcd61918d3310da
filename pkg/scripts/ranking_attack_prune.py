"""Model ranking, attack detection and pruning on the synthetic task archetypes.

Prints, per archetype: Kendall tau of U-StackingNet weights, spectral
estimates and few-shot estimates against the true balanced accuracies;
detection rate against inspected fraction for both attacks; and the
balanced accuracy trace while pruning half the pool.
"""

import argparse
import math

import numpy as np

from stacknet.archetypes import ARCHETYPES
from stacknet.classification import ClassificationTrainConfig, stacking_classification_train
from stacknet.metrics import balanced_accuracy
from stacknet.ranking import (
    AttackSpec,
    LabelFlip,
    RandomInjection,
    apply_attack,
    detect_compromised,
    detection_rate,
    few_shot_labels,
    few_shot_report,
    kendall_tau,
    prune_iteratively,
    rank_models,
    spectral_report,
)
from stacknet.synthetic import generate_synthetic


def tau0(a, b):
    t = kendall_tau(a, b)
    return 0.0 if math.isnan(t) else t


def ranking(seeds):
    print("Kendall tau vs true BCA (mean over seeds)")
    print(f"{'archetype':<16}{'U-Stacking':>12}{'spectral':>10}{'few-shot':>10}")
    for a in ARCHETYPES:
        rows = []
        for seed in range(seeds):
            table, y = generate_synthetic(a.spec(seed))
            true = [balanced_accuracy(table.values[:, j], y, a.n_classes) for j in range(table.n_models)]
            w = stacking_classification_train(table, None, ClassificationTrainConfig(seed=seed)).weights
            sp = spectral_report(table) if a.n_classes == 2 else None
            few = few_shot_report(table, few_shot_labels(y, a.n_classes, 10, np.random.default_rng(seed)))
            rows.append((
                tau0(w, true),
                tau0([sp.weight_of(m) for m in table.model_ids], true) if sp else np.nan,
                tau0([few.weight_of(m) for m in table.model_ids], true),
            ))
        u, s, f = np.nanmean(np.array(rows, dtype=float), axis=0) if a.n_classes == 2 else (
            np.mean([r[0] for r in rows]), np.nan, np.mean([r[2] for r in rows]))
        print(f"{a.name:<16}{u:>12.3f}{s:>10.3f}{f:>10.3f}")


def detection(seeds, archetype_names):
    fractions = (0.1, 0.2, 0.3, 0.5)
    print("\ndetection rate vs inspected fraction")
    print(f"{'archetype':<16}{'attack':<11}" + "".join(f"{f:>7}" for f in fractions))
    for a in ARCHETYPES:
        if a.name not in archetype_names:
            continue
        for label, kind in (("injection", RandomInjection(1)), ("best-flip", LabelFlip("best"))):
            ids, reports = [], []
            for seed in range(seeds):
                table, y = generate_synthetic(a.spec(seed, min(a.n_samples, 5000)))
                attacked, aid = apply_attack(table, AttackSpec(kind, seed), truth=y)
                w = stacking_classification_train(attacked, None, ClassificationTrainConfig(seed=seed))
                ids.append(aid)
                reports.append(rank_models(w, attacked.model_ids))
            rates = [detection_rate(ids, [detect_compromised(r, f) for r in reports]) for f in fractions]
            print(f"{a.name:<16}{label:<11}" + "".join(f"{r:>7.2f}" for r in rates))


def pruning(seeds):
    print("\nBCA while pruning 5 of 10 models (mean over seeds)")
    print(f"{'archetype':<16}" + "".join(f"{k:>8}" for k in range(6)))
    for a in ARCHETYPES:
        traces = []
        for seed in range(seeds):
            table, y = generate_synthetic(a.spec(seed, min(a.n_samples, 5000)))
            tr = prune_iteratively(table, None, ClassificationTrainConfig(seed=seed), 5, truth=y)
            traces.append([tr.initial_metric] + [m for _, _, m in tr.steps])
        curve = 100 * np.mean(traces, axis=0)
        print(f"{a.name:<16}" + "".join(f"{v:>8.2f}" for v in curve))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--part", choices=["all", "ranking", "detection", "pruning"], default="all")
    args = ap.parse_args()
    if args.part in ("all", "ranking"):
        ranking(args.seeds)
    if args.part in ("all", "detection"):
        detection(args.seeds, {"boolq", "imdb", "mmlu", "raft"})
    if args.part in ("all", "pruning"):
        pruning(args.seeds)


if __name__ == "__main__":
    main()
