"""Seeded experiment runner, parameter sweeps and the experiment config file.

Config files are INI-style: top-level ``key = value`` lines set the
experiment itself, and optional sections carry per-component settings::

    method = u-stackingnet
    dataset = boolq
    labels_fraction = 0.1
    seeds = 0, 1, 2, 3, 4

    [classification]
    lambda1 = 0.1

    [synthetic]          # instead of dataset
    n_samples = 2000
    n_models = 10
    accuracy_profile = 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.6, 0.7, 0.8, 0.9
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .baselines import EMConfig, dawid_skene, wawa
from .classification import (
    ClassificationTrainConfig,
    log_odds_weights,
    majority_vote,
    plurality_vote,
    stacking_classification_train,
    weighted_vote,
)
from .core import LabeledSubset, PredictionTable, normalize_minmax
from .errors import ConfigError, InsufficientDataError
from .io import SchemaHints, load_csv, resolve_dataset
from .metrics import balanced_accuracy, mae
from .ranking import (
    AttackSpec,
    LabelFlip,
    PruneTrace,
    RandomInjection,
    RankMethod,
    ReliabilityReport,
    apply_attack,
    detect_compromised,
    prune_iteratively,
    rank_models,
    spectral_report,
)
from .regression import (
    RegressionTrainConfig,
    estimate_error_covariance,
    inverse_variance_weights,
    optimal_weights_covariance,
    stacking_regression_predict,
    stacking_regression_train,
    uniform_average,
)
from .spectral import spectral_reliability, supervised_bca_estimate
from .synthetic import SyntheticPoolSpec, generate_synthetic


@dataclass(frozen=True)
class AttackConfig:
    # "none", "injection" or "flip"
    kind: str = "none"
    count: int = 1
    # "best" or comma-separated model ids
    target: str = "best"
    inspect_fraction: float = 0.5

    def spec(self, seed: int) -> AttackSpec | None:
        if self.kind == "none":
            return None
        if self.kind == "injection":
            return AttackSpec(RandomInjection(self.count), seed)
        if self.kind == "flip":
            target = "best" if self.target == "best" else tuple(t.strip() for t in self.target.split(","))
            return AttackSpec(LabelFlip(target), seed)
        raise ConfigError(f"unknown attack kind {self.kind!r}; use none, injection or flip")


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "voting"
    # registry name or CSV path; ignored when ``synthetic`` is set
    dataset: str | None = None
    synthetic: SyntheticPoolSpec | None = None
    # pool seed follows the run seed unless pinned in the [synthetic] section
    synthetic_seed_pinned: bool = False
    schema: SchemaHints | None = None
    labels_fraction: float = 0.0
    seeds: tuple[int, ...] = (0,)
    # score labeled rows too (default: evaluate on the unlabeled rows only)
    include_labeled: bool = False
    prune_steps: int = 0
    classification: ClassificationTrainConfig = ClassificationTrainConfig()
    regression: RegressionTrainConfig = RegressionTrainConfig()
    em: EMConfig = EMConfig()
    attack: AttackConfig = AttackConfig()

    def __post_init__(self):
        if not 0.0 <= self.labels_fraction <= 1.0:
            raise ConfigError(f"labels_fraction must lie in [0, 1], got {self.labels_fraction}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.dataset is None and self.synthetic is None:
            raise ConfigError("config needs a dataset or a [synthetic] section")
        if self.prune_steps < 0:
            raise ConfigError("prune_steps must be >= 0")

    @property
    def dataset_name(self) -> str:
        if self.synthetic is not None:
            return "synthetic"
        return Path(self.dataset).stem if self.dataset.endswith(".csv") else self.dataset


# ---------------------------------------------------------------------------
# config files


def _convert(value: str, typ, key: str):
    typ = typ if isinstance(typ, type) else None
    try:
        if typ is bool:
            v = value.strip().lower()
            if v not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return v in ("true", "1", "yes")
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value.strip()


def _block(cls, section: dict[str, str], name: str, **extra):
    known = {f.name: f for f in fields(cls)}
    kwargs = dict(extra)
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}; valid keys: {sorted(known)}")
        default = known[key].default
        if default is None or default is dataclasses.MISSING:
            kwargs[key] = _number_or_text(raw)
        else:
            typ = str if isinstance(default, str) else type(default)
            kwargs[key] = _convert(raw, typ, f"{name}.{key}")
    return cls(**kwargs)


def _number_or_text(raw: str):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw.strip()


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _synthetic(section: dict[str, str]) -> tuple[SyntheticPoolSpec, bool]:
    s = dict(section)
    if "accuracy_profile" not in s:
        raise ConfigError("[synthetic] needs accuracy_profile")
    try:
        profile = _floats(s.pop("accuracy_profile"))
    except ValueError:
        raise ConfigError("[synthetic] accuracy_profile must be a list of numbers") from None
    n_classes = s.pop("n_classes", "2")
    pinned = "seed" in s
    kwargs = {
        "accuracy_profile": profile,
        "n_classes": None if n_classes.strip().lower() in ("none", "regression") else int(n_classes),
    }
    kwargs.setdefault("n_models", len(profile))
    spec = _block(SyntheticPoolSpec, s, "synthetic", **kwargs)
    spec.validate()
    return spec, pinned


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    sections = {name: dict(parser[name]) for name in parser.sections()}
    top = sections.pop("experiment")
    kwargs: dict = {}
    for key, raw in top.items():
        if key == "seeds":
            try:
                kwargs["seeds"] = tuple(int(x) for x in raw.replace(",", " ").split())
            except ValueError:
                raise ConfigError(f"seeds: cannot parse {raw!r}") from None
        elif key in ("method", "dataset"):
            kwargs[key] = raw.strip()
        elif key == "labels_fraction":
            kwargs[key] = _convert(raw, float, key)
        elif key == "include_labeled":
            kwargs[key] = _convert(raw, bool, key)
        elif key == "prune_steps":
            kwargs[key] = _convert(raw, int, key)
        else:
            raise ConfigError(
                f"unknown key {key!r}; valid keys: dataset, include_labeled, labels_fraction, "
                "method, prune_steps, seeds"
            )
    blocks = {
        "classification": ClassificationTrainConfig,
        "regression": RegressionTrainConfig,
        "em": EMConfig,
        "attack": AttackConfig,
        "schema": SchemaHints,
    }
    for name, section in sections.items():
        if name == "synthetic":
            kwargs["synthetic"], kwargs["synthetic_seed_pinned"] = _synthetic(section)
        elif name in blocks:
            kwargs[name] = _block(blocks[name], section, name)
        else:
            raise ConfigError(f"unknown section [{name}]; valid: {sorted([*blocks, 'synthetic'])}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(repr(cfg).encode()).hexdigest()[:16]


def run_meta(cfg: ExperimentConfig, seed: int | Sequence[int] | None = None) -> str:
    seeds = cfg.seeds if seed is None else seed
    seeds = ",".join(str(s) for s in np.atleast_1d(seeds))
    return f"config_hash={config_hash(cfg)}\nseed={seeds}\nversion={__version__}\n"


# ---------------------------------------------------------------------------
# data and label splits


@dataclass(frozen=True, eq=False)
class RunData:
    """A table with its ground truth (NaN / 0 where unknown) for one seed."""

    table: PredictionTable
    truth: np.ndarray
    known: np.ndarray  # row indices with ground truth


def load_data(cfg: ExperimentConfig, seed: int) -> RunData:
    if cfg.synthetic is not None:
        spec = cfg.synthetic if cfg.synthetic_seed_pinned else dataclasses.replace(cfg.synthetic, seed=seed)
        table, truth = generate_synthetic(spec)
        if not table.is_classification:
            lo, hi = table.kind.lo, table.kind.hi
            table = normalize_minmax(table, lo, hi)
            truth = (truth - lo) / (hi - lo)
        return RunData(table, truth, np.arange(table.n_samples))
    entry = resolve_dataset(cfg.dataset)
    hints = cfg.schema or entry.hints
    table, labels = load_csv(entry.path, hints)
    truth = np.zeros(table.n_samples) if not table.is_classification else np.zeros(table.n_samples, np.int64)
    truth[labels.indices] = labels.targets
    return RunData(table, truth, np.asarray(labels.indices))


def split_labels(data: RunData, fraction: float, seed: int) -> LabeledSubset:
    """Uniform random subset of ``round(fraction * N)`` rows with known truth."""
    if fraction == 0 or data.known.size == 0:
        return LabeledSubset.empty()
    n = min(int(round(fraction * data.table.n_samples)), data.known.size)
    n = max(n, 1)
    rng = np.random.default_rng([seed, 1])
    idx = np.sort(rng.choice(data.known, size=n, replace=False))
    return LabeledSubset.from_truth(data.truth, idx)


def eval_rows(data: RunData, labels: LabeledSubset, include_labeled: bool) -> np.ndarray:
    if include_labeled or len(labels) == 0:
        return data.known
    rows = np.setdiff1d(data.known, labels.indices)
    return rows if rows.size else data.known


# ---------------------------------------------------------------------------
# methods: each maps (table, labels, cfg, seed) to predictions for every row

Method = Callable[[PredictionTable, LabeledSubset, ExperimentConfig, int], np.ndarray]


def _need_labels(labels: LabeledSubset, method: str) -> None:
    if len(labels) == 0:
        raise ConfigError(f"method {method!r} needs labels_fraction > 0")


def _voting(t, labels, cfg, seed):
    return plurality_vote(t, seed)


def _majority(t, labels, cfg, seed):
    return majority_vote(t).labels


def _log_odds(t, labels, cfg, seed):
    _need_labels(labels, "log-odds-voting")
    acc = np.clip(supervised_bca_estimate(t, labels), 1e-6, 1 - 1e-6)
    return weighted_vote(t, log_odds_weights(acc, t.n_classes), seed)


def _wawa(t, labels, cfg, seed):
    return wawa(t, seed)[0]


def _dawid_skene(t, labels, cfg, seed):
    return dawid_skene(t, cfg.em).labels(seed)


def _spectral(t, labels, cfg, seed):
    return weighted_vote(t, spectral_reliability(t)[1], seed)


def _stacking(supervised: bool) -> Method:
    def run(t, labels, cfg, seed):
        if supervised:
            _need_labels(labels, "s-stackingnet")
        train_cfg = dataclasses.replace(cfg.classification, seed=seed)
        params = stacking_classification_train(t, labels if supervised else None, train_cfg)
        return weighted_vote(t, params, seed)

    return run


def _uniform(t, labels, cfg, seed):
    return uniform_average(t)


def _optimal(t, labels, cfg, seed):
    _need_labels(labels, "optimal")
    w = optimal_weights_covariance(estimate_error_covariance(t, labels)).weights
    return t.values @ w


def _inverse_variance(t, labels, cfg, seed):
    _need_labels(labels, "inverse-variance")
    return t.values @ inverse_variance_weights(estimate_error_covariance(t, labels)).weights


def _stacking_regression(t, labels, cfg, seed):
    _need_labels(labels, "stacking-regression")
    params = stacking_regression_train(t, labels, dataclasses.replace(cfg.regression, seed=seed))
    return stacking_regression_predict(t, params)


CLASSIFICATION_METHODS: dict[str, Method] = {
    "voting": _voting,
    "majority-voting": _majority,
    "log-odds-voting": _log_odds,
    "wawa": _wawa,
    "dawid-skene": _dawid_skene,
    "spectral": _spectral,
    "u-stackingnet": _stacking(False),
    "s-stackingnet": _stacking(True),
}
REGRESSION_METHODS: dict[str, Method] = {
    "uniform": _uniform,
    "optimal": _optimal,
    "inverse-variance": _inverse_variance,
    "stacking-regression": _stacking_regression,
}
# per-model references, reported as the best / worst single base model
REFERENCE_METHODS = ("base-best", "base-worst")
ALL_METHODS = (*CLASSIFICATION_METHODS, *REGRESSION_METHODS, *REFERENCE_METHODS)


def check_method(name: str) -> None:
    if name not in ALL_METHODS:
        raise ConfigError(f"unknown method {name!r}; valid methods: {', '.join(ALL_METHODS)}")


# ---------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class RunRecord:
    method: str
    dataset: str
    seed: int
    metric_name: str
    value: float


@dataclass
class ExperimentResult:
    records: list[RunRecord] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records])

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        # population std, so a single seed reports exactly 0
        return float(np.std(self.values))

    def summary_row(self) -> dict[str, str]:
        r = self.records[0]
        return {
            "method": r.method,
            "dataset": r.dataset,
            "metric": r.metric_name,
            "mean": format_metric(r.metric_name, self.mean),
            "std": format_metric(r.metric_name, self.std),
            "n_seeds": str(len(self.records)),
        }


def format_metric(name: str, value: float) -> str:
    # BCA in percent with two decimals; MAE on the normalised [0, 1] scale
    return f"{value:.2f}" if name == "bca" else f"{value:.4f}"


def evaluate(
    method: str, data: RunData, labels: LabeledSubset, cfg: ExperimentConfig, seed: int
) -> tuple[str, float]:
    t = data.table
    rows = eval_rows(data, labels, cfg.include_labeled)
    if rows.size == 0:
        raise InsufficientDataError("no rows with ground truth to evaluate on")
    truth = data.truth[rows]
    if t.is_classification:
        if method in REFERENCE_METHODS:
            scores = [balanced_accuracy(t.values[rows, j], truth, t.n_classes) for j in range(t.n_models)]
            value = max(scores) if method == "base-best" else min(scores)
        elif method in CLASSIFICATION_METHODS:
            pred = CLASSIFICATION_METHODS[method](t, labels, cfg, seed)
            value = balanced_accuracy(pred[rows], truth, t.n_classes)
        else:
            raise ConfigError(f"method {method!r} needs a regression table")
        return "bca", 100.0 * value
    if method in REFERENCE_METHODS:
        scores = [mae(t.values[rows, j], truth) for j in range(t.n_models)]
        return "mae", min(scores) if method == "base-best" else max(scores)
    if method not in REGRESSION_METHODS:
        raise ConfigError(f"method {method!r} needs a classification table")
    pred = REGRESSION_METHODS[method](t, labels, cfg, seed)
    return "mae", mae(pred[rows], truth)


def run_single(cfg: ExperimentConfig, seed: int) -> RunRecord:
    check_method(cfg.method)
    data = load_data(cfg, seed)
    labels = split_labels(data, cfg.labels_fraction, seed)
    name, value = evaluate(cfg.method, data, labels, cfg, seed)
    return RunRecord(cfg.method, cfg.dataset_name, seed, name, value)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    check_method(cfg.method)
    return ExperimentResult([run_single(cfg, s) for s in cfg.seeds])


def results_csv(results: Sequence[ExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "dataset", "seed", "metric", "value"])
    for res in results:
        for r in res.records:
            w.writerow([r.method, r.dataset, r.seed, r.metric_name, repr(float(r.value))])
    return buf.getvalue()


def summary_csv(results: Sequence[ExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["method", "dataset", "metric", "mean", "std", "n_seeds"], lineterminator="\n")
    w.writeheader()
    for res in results:
        w.writerow(res.summary_row())
    return buf.getvalue()


def summary_table(results: Sequence[ExperimentResult]) -> str:
    lines = [f"{'method':<22}{'dataset':<16}{'metric':<8}{'mean ± std':>18}"]
    for res in results:
        r = res.summary_row()
        lines.append(f"{r['method']:<22}{r['dataset']:<16}{r['metric']:<8}{r['mean'] + ' ± ' + r['std']:>18}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# sweeps

SWEEP_PARAMS = (
    "labels_fraction",
    "learning_rate",
    "epochs",
    "lambda1",
    "lambda2",
    "inspect_fraction",
    "prune_steps",
    "attack_count",
)


def with_param(cfg: ExperimentConfig, param: str, value) -> ExperimentConfig:
    if param == "labels_fraction":
        return dataclasses.replace(cfg, labels_fraction=float(value))
    if param == "prune_steps":
        return dataclasses.replace(cfg, prune_steps=int(value))
    if param == "inspect_fraction":
        return dataclasses.replace(cfg, attack=dataclasses.replace(cfg.attack, inspect_fraction=float(value)))
    if param == "attack_count":
        return dataclasses.replace(cfg, attack=dataclasses.replace(cfg.attack, count=int(value)))
    if param in ("learning_rate", "epochs", "lambda1", "lambda2"):
        cast = int if param == "epochs" else float
        cls_cfg = dataclasses.replace(cfg.classification, **{param: cast(value)})
        reg_cfg = cfg.regression
        if param == "learning_rate":
            reg_cfg = dataclasses.replace(reg_cfg, learning_rate=float(value))
        elif param == "epochs":
            reg_cfg = dataclasses.replace(reg_cfg, epochs=int(value))
        return dataclasses.replace(cfg, classification=cls_cfg, regression=reg_cfg)
    raise ConfigError(f"unknown sweep parameter {param!r}; valid: {', '.join(SWEEP_PARAMS)}")


SweepRunner = Callable[[ExperimentConfig, int], list[tuple[str, float]]]


def _metric_runner(cfg: ExperimentConfig, seed: int) -> list[tuple[str, float]]:
    r = run_single(cfg, seed)
    return [(r.metric_name, r.value)]


RANKING_METHODS = ("u-stackingnet", "s-stackingnet", "spectral")


def reliability_report(table: PredictionTable, labels: LabeledSubset, cfg: ExperimentConfig, seed: int) -> ReliabilityReport:
    """Rank models by the weights of ``cfg.method`` (a StackingNet variant or spectral)."""
    method = cfg.method if cfg.method in RANKING_METHODS else "u-stackingnet"
    if method == "spectral":
        return spectral_report(table)
    if method == "s-stackingnet":
        _need_labels(labels, method)
    train_cfg = dataclasses.replace(cfg.classification, seed=seed)
    params = stacking_classification_train(table, labels if method == "s-stackingnet" else None, train_cfg)
    return rank_models(params, table.model_ids, RankMethod(method))


@dataclass(frozen=True)
class DetectionOutcome:
    seed: int
    attacked: tuple[str, ...]
    suspects: tuple[str, ...]

    @property
    def detected(self) -> bool:
        return set(self.attacked) <= set(self.suspects)


def run_detection(cfg: ExperimentConfig, seed: int) -> DetectionOutcome:
    """Attack the pool, learn weights on the attacked pool, inspect the lowest ones."""
    spec = cfg.attack.spec(seed)
    if spec is None:
        raise ConfigError("detection needs an [attack] section with kind = injection or flip")
    data = load_data(cfg, seed)
    labels = split_labels(data, cfg.labels_fraction, seed)
    truth = data.truth if data.known.size == data.table.n_samples else None
    attacked, ids = apply_attack(data.table, spec, truth=truth)
    report = reliability_report(attacked, labels, cfg, seed)
    suspects = detect_compromised(report, cfg.attack.inspect_fraction)
    return DetectionOutcome(seed, tuple(ids), tuple(suspects))


def run_prune(cfg: ExperimentConfig, seed: int) -> PruneTrace:
    data = load_data(cfg, seed)
    labels = split_labels(data, cfg.labels_fraction, seed)
    if cfg.method == "s-stackingnet":
        _need_labels(labels, cfg.method)
    else:
        labels = LabeledSubset.empty()
    truth = data.truth if data.known.size == data.table.n_samples else None
    train_cfg = dataclasses.replace(cfg.classification, seed=seed)
    return prune_iteratively(data.table, labels, train_cfg, cfg.prune_steps, truth=truth)


def _detection_runner(cfg: ExperimentConfig, seed: int) -> list[tuple[str, float]]:
    return [("detected", float(run_detection(cfg, seed).detected))]


def _prune_runner(cfg: ExperimentConfig, seed: int) -> list[tuple[str, float]]:
    trace = run_prune(cfg, seed)
    return [("initial_bca", 100.0 * trace.initial_metric), ("final_bca", 100.0 * trace.final_metric)]


def sweep(
    cfg: ExperimentConfig, param: str, values: Sequence, runner: SweepRunner | None = None
) -> str:
    """Long-form CSV with one row per (value, seed, metric), in input order.

    ``runner`` maps a config and seed to named metrics. By default
    ``inspect_fraction`` and ``attack_count`` report attack detection,
    ``prune_steps`` reports balanced accuracy before and after pruning, and
    everything else runs the configured method.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; valid: {', '.join(SWEEP_PARAMS)}")
    if runner is None:
        runner = {
            "inspect_fraction": _detection_runner,
            "attack_count": _detection_runner,
            "prune_steps": _prune_runner,
        }.get(param, _metric_runner)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "value", "method", "dataset", "seed", "metric", "result"])
    for v in values:
        c = with_param(cfg, param, v)
        for seed in c.seeds:
            for name, result in runner(c, seed):
                w.writerow([param, v, c.method, c.dataset_name, seed, name, repr(float(result))])
    return buf.getvalue()
