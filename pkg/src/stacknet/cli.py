"""Command-line entry point: ``stacknet <command> --config <file> [--seed N] [--out <dir>]``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import dawid_skene, wawa
from .classification import InitMode, plurality_vote, stacking_classification_train
from .core import LabeledSubset, format_params
from .errors import ConfigError, StackNetError
from .experiment import (
    ExperimentConfig,
    load_config,
    load_data,
    reliability_report,
    results_csv,
    run_detection,
    run_experiment,
    run_meta,
    run_prune,
    split_labels,
    summary_csv,
    summary_table,
    sweep,
)
from .io import format_csv
from .metrics import balanced_accuracy
from .ranking import apply_attack, kendall_tau
from .regression import (
    estimate_error_covariance,
    inverse_variance_weights,
    optimal_weights_covariance,
    stacking_regression_train,
)
from .spectral import spectral_reliability

log = logging.getLogger("stacknet")

BASELINES = ("voting", "wawa", "dawid-skene")
TRAINABLE = ("u-stackingnet", "s-stackingnet", "spectral", "stacking-regression", "optimal", "inverse-variance")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.labels_fraction is not None:
        changes["labels_fraction"] = args.labels_fraction
    if args.method is not None:
        changes["method"] = args.method
    cls = {}
    if args.lambda1 is not None:
        cls["lambda1"] = args.lambda1
    if args.lambda2 is not None:
        cls["lambda2"] = args.lambda2
    if args.init_mode is not None:
        cls["init_mode"] = InitMode(args.init_mode)
    if cls:
        changes["classification"] = dataclasses.replace(cfg.classification, **cls)
    return dataclasses.replace(cfg, **changes)


class Output:
    """Writes result files into the output directory, or stdout when none is given."""

    def __init__(self, out: str | None):
        self.dir = Path(out) if out else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        if self.dir is None:
            sys.stdout.write(f"# {name}\n{text}")
        else:
            (self.dir / name).write_text(text, encoding="utf-8")


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _first_seed(cfg: ExperimentConfig) -> int:
    return cfg.seeds[0]


def cmd_generate(cfg, args, out: Output) -> None:
    seed = _first_seed(cfg)
    data = load_data(cfg, seed)
    labels = LabeledSubset.from_truth(data.truth, data.known)
    out.write("predictions.csv", format_csv(data.table, labels))


def cmd_combine(cfg, args, out: Output) -> None:
    res = run_experiment(cfg)
    out.write("results.csv", results_csv([res]))
    out.write("summary.csv", summary_csv([res]))
    print(summary_table([res]))


def cmd_train(cfg, args, out: Output) -> None:
    if cfg.method not in TRAINABLE:
        raise ConfigError(f"train supports methods {', '.join(TRAINABLE)}; got {cfg.method!r}")
    seed = _first_seed(cfg)
    data = load_data(cfg, seed)
    t = data.table
    labels = split_labels(data, cfg.labels_fraction, seed)
    if cfg.method == "u-stackingnet":
        params = stacking_classification_train(t, None, dataclasses.replace(cfg.classification, seed=seed))
    elif cfg.method == "s-stackingnet":
        if len(labels) == 0:
            raise ConfigError("s-stackingnet needs labels_fraction > 0")
        params = stacking_classification_train(t, labels, dataclasses.replace(cfg.classification, seed=seed))
    elif cfg.method == "spectral":
        params = spectral_reliability(t)[1]
    elif len(labels) == 0:
        raise ConfigError(f"{cfg.method} needs labels_fraction > 0")
    elif cfg.method == "stacking-regression":
        params = stacking_regression_train(t, labels, dataclasses.replace(cfg.regression, seed=seed))
    elif cfg.method == "optimal":
        params = optimal_weights_covariance(estimate_error_covariance(t, labels))
    else:
        params = inverse_variance_weights(estimate_error_covariance(t, labels))
    out.write("params.txt", format_params(params, t.model_ids))


def cmd_baseline(cfg, args, out: Output) -> None:
    if cfg.method not in BASELINES:
        raise ConfigError(f"baseline --method must be one of {', '.join(BASELINES)}; got {cfg.method!r}")
    seed = _first_seed(cfg)
    data = load_data(cfg, seed)
    t = data.table
    if cfg.method == "voting":
        labels = plurality_vote(t, seed)
        reliability = np.mean(t.values == labels[:, None], axis=0)
    elif cfg.method == "wawa":
        labels, reliability = wawa(t, seed)
    else:
        res = dawid_skene(t, cfg.em)
        labels = res.labels(seed)
        # balanced accuracy implied by each confusion matrix
        reliability = np.einsum("jkk->jk", res.confusion).mean(axis=1)
    out.write("labels.csv", _rows_csv(["sample_id", "label"], zip(t.sample_ids, labels.tolist())))
    out.write(
        "reliability.csv",
        _rows_csv(["model_id", "reliability"], [(m, repr(float(r))) for m, r in zip(t.model_ids, reliability)]),
    )
    if data.known.size:
        bca = balanced_accuracy(labels[data.known], data.truth[data.known], t.n_classes)
        print(f"{cfg.method} BCA {100 * bca:.2f}")


def cmd_rank(cfg, args, out: Output) -> None:
    seed = _first_seed(cfg)
    data = load_data(cfg, seed)
    t = data.table
    labels = split_labels(data, cfg.labels_fraction, seed)
    report = reliability_report(t, labels, cfg, seed)
    rows = [
        (r.model_id, repr(r.weight), r.rank)
        for r in sorted(report.per_model, key=lambda r: r.rank)
    ]
    out.write("ranking.csv", _rows_csv(["model_id", "weight", "rank"], rows))
    if data.known.size == t.n_samples:
        true_bca = [balanced_accuracy(t.values[:, j], data.truth, t.n_classes) for j in range(t.n_models)]
        weights = [report.weight_of(m) for m in t.model_ids]
        print(f"Kendall tau vs true BCA: {kendall_tau(weights, true_bca):.4f}")


def cmd_attack(cfg, args, out: Output) -> None:
    seed = _first_seed(cfg)
    spec = cfg.attack.spec(seed)
    if spec is None:
        raise ConfigError("attack needs an [attack] section with kind = injection or flip")
    data = load_data(cfg, seed)
    truth = data.truth if data.known.size == data.table.n_samples else None
    table, ids = apply_attack(data.table, spec, truth=truth)
    out.write("attacked.csv", format_csv(table, LabeledSubset.from_truth(data.truth, data.known)))
    out.write("attacked_ids.txt", "\n".join(ids) + "\n")


def cmd_detect(cfg, args, out: Output) -> None:
    outcomes = [run_detection(cfg, s) for s in cfg.seeds]
    rows = [(o.seed, " ".join(o.attacked), " ".join(o.suspects), int(o.detected)) for o in outcomes]
    out.write("detection.csv", _rows_csv(["seed", "attacked", "suspects", "detected"], rows))
    rate = np.mean([o.detected for o in outcomes])
    print(f"detection rate {rate:.4f} over {len(outcomes)} seeds")


def cmd_prune(cfg, args, out: Output) -> None:
    if cfg.prune_steps < 1:
        raise ConfigError("prune needs prune_steps >= 1")
    rows = []
    for seed in cfg.seeds:
        trace = run_prune(cfg, seed)
        rows.append((seed, 0, "", repr(trace.initial_metric)))
        rows += [(seed, k + 1, mid, repr(metric)) for k, (mid, _, metric) in enumerate(trace.steps)]
    out.write("prune.csv", _rows_csv(["seed", "step", "removed_id", "metric"], rows))


def cmd_sweep(cfg, args, out: Output) -> None:
    if not args.param:
        raise ConfigError("sweep needs --param")
    values = [v for v in (args.values or "").replace(",", " ").split()]
    out.write("sweep.csv", sweep(cfg, args.param, values))


COMMANDS = {
    "combine": cmd_combine,
    "train": cmd_train,
    "baseline": cmd_baseline,
    "rank": cmd_rank,
    "attack": cmd_attack,
    "detect": cmd_detect,
    "prune": cmd_prune,
    "sweep": cmd_sweep,
    "generate": cmd_generate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stacknet", description="Combine predictions from a pool of models.")
    parser.add_argument("--version", action="version", version=f"stacknet {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--seed", type=int, help="run this seed only")
    parser.add_argument("--out", help="output directory (default: print to stdout)")
    parser.add_argument("--method")
    parser.add_argument("--labels-fraction", type=float)
    parser.add_argument("--lambda1", type=float)
    parser.add_argument("--lambda2", type=float)
    parser.add_argument("--init-mode", choices=[m.value for m in InitMode])
    parser.add_argument("--param", help="sweep parameter")
    parser.add_argument("--values", help="sweep values, comma or space separated")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out = Output(args.out)
        COMMANDS[args.command](cfg, args, out)
        if out.dir is not None:
            out.write("run.meta", run_meta(cfg))
    except (StackNetError, OSError) as exc:
        print(f"stacknet {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
