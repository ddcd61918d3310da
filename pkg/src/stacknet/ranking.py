"""Model ranking from combiner weights, attack simulation, detection and pruning."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classification import (
    ClassificationTrainConfig,
    stacking_classification_train,
    weighted_vote,
)
from .core import CombinerParams, LabeledSubset, PredictionTable, require_classification
from .errors import ConfigError, MissingOracleError, ShapeError
from .metrics import balanced_accuracy
from .spectral import assumption_risk, spectral_bca, spectral_reliability, supervised_bca_estimate

log = logging.getLogger(__name__)


class RankMethod(str, enum.Enum):
    SUPERVISED_FEW_SHOT = "supervised-few-shot"
    S_STACKINGNET = "s-stackingnet"
    U_STACKINGNET = "u-stackingnet"
    SPECTRAL = "spectral"


@dataclass(frozen=True)
class ModelRank:
    model_id: str
    weight: float
    rank: int
    estimated_bca: float | None = None


@dataclass
class ReliabilityReport:
    per_model: list[ModelRank]
    method: RankMethod = RankMethod.U_STACKINGNET
    flags: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ranked_ids(self) -> list[str]:
        """Model ids from most to least reliable."""
        return [r.model_id for r in sorted(self.per_model, key=lambda r: r.rank)]

    def weight_of(self, model_id: str) -> float:
        return next(r.weight for r in self.per_model if r.model_id == model_id)


def rank_models(
    params: CombinerParams,
    model_ids: Sequence[str],
    method: RankMethod = RankMethod.U_STACKINGNET,
    estimated_bca: Sequence[float] | None = None,
    flags: Sequence[tuple[str, str]] = (),
) -> ReliabilityReport:
    """Rank 1 = largest weight; equal weights are ordered by model id."""
    ids = [str(x) for x in model_ids]
    if len(params) != len(ids):
        raise ShapeError(f"{len(params)} weights for {len(ids)} models")
    w = params.weights
    order = sorted(range(len(ids)), key=lambda j: (-w[j], ids[j]))
    rank = {j: r + 1 for r, j in enumerate(order)}
    bca = list(estimated_bca) if estimated_bca is not None else [None] * len(ids)
    per_model = [
        ModelRank(ids[j], float(w[j]), rank[j], None if bca[j] is None else float(bca[j]))
        for j in range(len(ids))
    ]
    return ReliabilityReport(per_model, RankMethod(method), list(flags))


def kendall_tau(a, b) -> float:
    """Kendall rank correlation (tau-b, so ties in either input are handled).

    Inputs are any two equal-length score or rank vectors; only their orderings matter.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"need two equal-length 1-D inputs, got {x.shape} and {y.shape}")
    if len(x) < 2 or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ShapeError("need at least two finite entries")
    i, j = np.triu_indices(len(x), k=1)
    sx = np.sign(x[i] - x[j])
    sy = np.sign(y[i] - y[j])
    untied_x = np.count_nonzero(sx)
    untied_y = np.count_nonzero(sy)
    if untied_x == 0 or untied_y == 0:
        return float("nan")
    return float(np.sum(sx * sy) / math.sqrt(untied_x * untied_y))


# ---------------------------------------------------------------------------
# attacks


@dataclass(frozen=True)
class RandomInjection:
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("injection count must be >= 1")


@dataclass(frozen=True)
class LabelFlip:
    # "best" or a tuple of model ids
    target: str | tuple[str, ...] = "best"


@dataclass(frozen=True)
class AttackSpec:
    kind: RandomInjection | LabelFlip
    seed: int = 0


def derangement(k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of 0..k-1 with no fixed point."""
    while True:
        p = rng.permutation(k)
        if not np.any(p == np.arange(k)):
            return p


def flip_labels(column: np.ndarray, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    """Map every label to a different class: swap for K=2, a fixed derangement otherwise."""
    col0 = np.asarray(column) - 1
    if n_classes == 2:
        return 2 - col0
    return derangement(n_classes, rng)[col0] + 1


def best_model_index(
    table: PredictionTable, truth=None, report: ReliabilityReport | None = None
) -> int:
    if truth is not None:
        truth = np.asarray(truth)
        scores = [balanced_accuracy(table.values[:, j], truth, table.n_classes) for j in range(table.n_models)]
        return int(np.argmax(scores))
    if report is not None:
        return table.model_ids.index(report.ranked_ids[0])
    raise MissingOracleError("flipping the best model needs ground truth or a reliability report")


def apply_attack(
    table: PredictionTable,
    spec: AttackSpec,
    truth=None,
    report: ReliabilityReport | None = None,
) -> tuple[PredictionTable, list[str]]:
    """Return the attacked table and the ids of injected or flipped columns."""
    require_classification(table)
    rng = np.random.default_rng(spec.seed)
    k = table.n_classes
    kind = spec.kind
    if isinstance(kind, RandomInjection):
        ids, n = [], 1
        while len(ids) < kind.count:
            candidate = f"random{n}"
            if candidate not in table.model_ids:
                ids.append(candidate)
            n += 1
        cols = rng.integers(1, k + 1, size=(table.n_samples, kind.count))
        return table.with_columns(cols, ids), ids

    if kind.target == "best":
        targets = [best_model_index(table, truth, report)]
    else:
        unknown = set(kind.target) - set(table.model_ids)
        if unknown:
            raise ConfigError(f"unknown model ids {sorted(unknown)}")
        targets = [table.model_ids.index(t) for t in kind.target]
    new = {j: flip_labels(table.values[:, j], k, rng) for j in targets}
    return table.replace_columns(new), [table.model_ids[j] for j in targets]


def detect_compromised(report: ReliabilityReport, inspect_fraction: float) -> list[str]:
    """The ``ceil(inspect_fraction * M)`` lowest-ranked model ids."""
    if not 0 < inspect_fraction <= 1:
        raise ConfigError("inspect_fraction must lie in (0, 1]")
    ranked = report.ranked_ids
    n = math.ceil(inspect_fraction * len(ranked) - 1e-12)
    return ranked[len(ranked) - n:]


def detection_rate(attacked: Sequence[Sequence[str]], suspects: Sequence[Sequence[str]]) -> float:
    """Fraction of runs whose attacked ids are all among the suspects."""
    hits = [set(a) <= set(s) for a, s in zip(attacked, suspects, strict=True)]
    return float(np.mean(hits)) if hits else float("nan")


# ---------------------------------------------------------------------------
# pruning


@dataclass
class PruneTrace:
    initial_metric: float
    steps: list[tuple[str, int, float]] = field(default_factory=list)
    # "truth" or "consensus": what the metric is measured against
    metric_reference: str = "truth"

    @property
    def final_metric(self) -> float:
        return self.steps[-1][2] if self.steps else self.initial_metric


def prune_iteratively(
    table: PredictionTable,
    labels: LabeledSubset | None,
    cfg: ClassificationTrainConfig,
    steps: int,
    truth=None,
) -> PruneTrace:
    """Repeatedly drop the lowest-weight model and retrain.

    The metric is balanced accuracy of the retrained combiner on the
    unlabeled rows, against ``truth`` if given, else against the full
    ensemble's initial predictions.
    """
    require_classification(table)
    labels = labels if labels is not None else LabeledSubset.empty()
    if steps >= table.n_models:
        raise ConfigError(f"pruning {steps} of {table.n_models} models would empty the ensemble")
    if steps < 0:
        raise ConfigError("steps must be >= 0")
    k = table.n_classes
    eval_rows = np.setdiff1d(np.arange(table.n_samples), labels.indices)
    if eval_rows.size == 0:
        eval_rows = np.arange(table.n_samples)

    params = stacking_classification_train(table, labels, cfg)
    pred = weighted_vote(table, params, cfg.seed)
    if truth is not None:
        reference, source = np.asarray(truth), "truth"
    else:
        reference, source = pred, "consensus"
        log.info("no ground truth: pruning metric measured against the initial combination")
    trace = PruneTrace(balanced_accuracy(pred[eval_rows], reference[eval_rows], k), metric_reference=source)

    current = table
    for _ in range(steps):
        report = rank_models(params, current.model_ids)
        drop = report.ranked_ids[-1]
        keep = [j for j, mid in enumerate(current.model_ids) if mid != drop]
        current = current.select_models(keep)
        params = stacking_classification_train(current, labels, cfg)
        pred = weighted_vote(current, params, cfg.seed)
        metric = balanced_accuracy(pred[eval_rows], reference[eval_rows], k)
        trace.steps.append((drop, current.n_models, metric))
    return trace


def few_shot_labels(truth, n_classes: int, per_class: int, rng: np.random.Generator) -> LabeledSubset:
    """Draw up to ``per_class`` labeled rows of each class."""
    truth = np.asarray(truth)
    picked = []
    for k in range(1, n_classes + 1):
        rows = np.flatnonzero(truth == k)
        if rows.size:
            picked.append(rng.choice(rows, size=min(per_class, rows.size), replace=False))
    idx = np.sort(np.concatenate(picked)) if picked else np.zeros(0, dtype=np.int64)
    return LabeledSubset.from_truth(truth, idx)


def spectral_report(table: PredictionTable, risk_margin: float = 0.2) -> ReliabilityReport:
    """Rank by spectral weights; every model is flagged when the sign vote is too close to call."""
    est, params = spectral_reliability(table)
    flags = [(mid, "assumption-risk") for mid in table.model_ids] if assumption_risk(est, risk_margin) else []
    return rank_models(params, table.model_ids, RankMethod.SPECTRAL, spectral_bca(est), flags)


def few_shot_report(table: PredictionTable, labels: LabeledSubset) -> ReliabilityReport:
    bca = supervised_bca_estimate(table, labels)
    return rank_models(CombinerParams(bca), table.model_ids, RankMethod.SUPERVISED_FEW_SHOT, bca)
