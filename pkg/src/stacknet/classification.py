"""Classification combiners: plurality/majority voting, log-odds weighting and the
semi-supervised weighted-vote combiner trained by projected gradient descent.

Public functions take and return 1-based class labels; the private helpers
work on 0-based labels and the (N, K, M) one-hot tensor.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import CombinerParams, LabeledSubset, PredictionTable, one_hot, require_classification
from .errors import ConfigError, DivergenceError, InsufficientDataError, InvalidRangeError, NoSignalError, ShapeError
from .metrics import REJECTED, per_class_recall

log = logging.getLogger(__name__)

SeedLike = int | np.random.Generator | None


class InitMode(str, enum.Enum):
    UNIFORM = "uniform"
    SUPERVISED_BCA = "supervised-bca"
    VOTING_BCA = "voting-bca"
    AUTO = "auto"  # supervised-bca with labels, voting-bca without


class ClassWeighting(str, enum.Enum):
    NONE = "none"
    INVERSE_FREQUENCY = "inverse-frequency"


@dataclass(frozen=True)
class ClassificationTrainConfig:
    # the disagreement term is linear in w, so long horizons (lr * epochs * lambda1 >> 1)
    # drive all weight onto a single model; these defaults stop well short of that
    learning_rate: float = 0.05
    epochs: int = 100
    lambda1: float = 0.1
    lambda2: float = 1.0
    init_mode: InitMode = InitMode.AUTO
    class_weighting: ClassWeighting = ClassWeighting.NONE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "init_mode", InitMode(self.init_mode))
        object.__setattr__(self, "class_weighting", ClassWeighting(self.class_weighting))
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be non-negative")


class VoteResult(NamedTuple):
    """Majority-vote outcome per sample; ``labels`` holds ``REJECTED`` (0) when no class has > M/2 votes."""

    labels: np.ndarray
    margins: np.ndarray


def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def argmax_random_ties(scores: np.ndarray, rng: np.random.Generator, rtol: float = 1e-12) -> np.ndarray:
    """Row-wise argmax (0-based), choosing uniformly among entries tied for the maximum."""
    top = scores.max(axis=1, keepdims=True)
    tied = scores >= top - rtol * np.maximum(1.0, np.abs(top))
    out = np.argmax(tied, axis=1)
    rows = np.flatnonzero(tied.sum(axis=1) > 1)
    if rows.size:
        u = rng.random((rows.size, scores.shape[1]))
        out[rows] = np.argmax(np.where(tied[rows], u, -1.0), axis=1)
    return out


def vote_counts(table: PredictionTable) -> np.ndarray:
    """(N, K) matrix of raw vote counts."""
    require_classification(table)
    labels = table.labels0
    n = table.n_samples
    counts = np.zeros((n, table.n_classes), dtype=np.int64)
    rows = np.repeat(np.arange(n), table.n_models)
    np.add.at(counts, (rows, labels.ravel()), 1)
    return counts


def plurality_vote(table: PredictionTable, seed: SeedLike = 0) -> np.ndarray:
    counts = vote_counts(table)
    return argmax_random_ties(counts.astype(float), _rng(seed)) + 1


def majority_vote(table: PredictionTable) -> VoteResult:
    counts = vote_counts(table)
    order = np.sort(counts, axis=1)
    margins = order[:, -1] - (order[:, -2] if counts.shape[1] > 1 else 0)
    best = np.argmax(counts, axis=1)
    win = 2 * counts[np.arange(len(counts)), best] > table.n_models
    labels = np.where(win, best + 1, REJECTED)
    return VoteResult(labels, margins)


def log_odds_weights(accuracies, n_classes: int = 2) -> CombinerParams:
    """Weights proportional to ``log((K - 1) p / (1 - p))``, negatives clamped to zero, normalised to sum 1.

    For K > 2 the ``K - 1`` factor assumes errors spread evenly over the wrong
    classes, so chance level is ``1 / K`` rather than one half.
    """
    p = np.asarray(accuracies, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise InvalidRangeError("accuracies must lie strictly in (0, 1); clamp them to [1e-6, 1 - 1e-6]")
    if n_classes < 2:
        raise InvalidRangeError(f"n_classes must be >= 2, got {n_classes}")
    raw = np.maximum(np.log((n_classes - 1) * p / (1 - p)), 0.0)
    if raw.sum() <= 0:
        raise NoSignalError("no model is better than chance; log-odds weights undefined")
    return CombinerParams(raw / raw.sum())


def class_scores(table: PredictionTable, params: CombinerParams) -> np.ndarray:
    """Combined score matrix (N, K): ``sum_j w_j * onehot_j``."""
    require_classification(table)
    if len(params) != table.n_models:
        raise ShapeError(f"{len(params)} weights for {table.n_models} models")
    return one_hot(table) @ params.weights


def weighted_vote(table: PredictionTable, params: CombinerParams, seed: SeedLike = 0) -> np.ndarray:
    return argmax_random_ties(class_scores(table, params), _rng(seed)) + 1


def consensus_pseudo_labels(table: PredictionTable, params: CombinerParams, seed: SeedLike = 0) -> np.ndarray:
    return weighted_vote(table, params, seed)


# ---------------------------------------------------------------------------
# objective pieces on the one-hot tensor x of shape (N, K, M)


def class_scores_from_tensor(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    n, k, m = x.shape
    return (x.reshape(n * k, m) @ w).reshape(n, k)


def _sample_weights(y0: np.ndarray, n_classes: int, weighting: ClassWeighting) -> np.ndarray:
    if ClassWeighting(weighting) is ClassWeighting.NONE:
        return np.ones(len(y0))
    freq = np.bincount(y0, minlength=n_classes) / len(y0)
    return 1.0 / freq[y0]


def _sup_loss_grad(x: np.ndarray, y0: np.ndarray, s: np.ndarray, w: np.ndarray):
    """Weighted-mean cross-entropy of softmax(x @ w) and its gradient."""
    scores = x @ w
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(y0))
    norm = s.sum()
    loss = float(-(s * logp[rows, y0]).sum() / norm)
    delta = np.exp(logp)
    delta[rows, y0] -= 1.0
    grad = np.einsum("ik,ikj->j", delta * (s / norm)[:, None], x)
    return loss, grad


def disagreement_rates(x: np.ndarray, pseudo0: np.ndarray) -> np.ndarray:
    """Per-model fraction of samples where the model differs from the pseudo-labels."""
    n, k, m = x.shape
    target = np.zeros((n, k))
    target[np.arange(n), pseudo0] = 1.0
    return 1.0 - target.reshape(-1) @ x.reshape(n * k, m) / n


def combined_objective(
    x: np.ndarray,
    w: np.ndarray,
    pseudo0: np.ndarray,
    lambda1: float,
    lambda2: float,
    sup: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
):
    """Supervised CE + lambda1 * disagreement + lambda2 * (1 - sum w)^2, with gradient.

    ``pseudo0`` are held fixed, so the disagreement term is linear in ``w``.
    ``sup`` is ``(row_indices, targets0, sample_weights)`` or ``None``.
    """
    loss, grad = 0.0, np.zeros_like(w)
    if sup is not None:
        idx, y0, s = sup
        ls, gs = _sup_loss_grad(x[idx], y0, s, w)
        loss += ls
        grad += gs
    if lambda1:
        d = disagreement_rates(x, pseudo0)
        loss += lambda1 * float(w @ d)
        grad += lambda1 * d
    if lambda2:
        gap = 1.0 - w.sum()
        loss += lambda2 * gap * gap
        grad += -2.0 * lambda2 * gap
    return loss, grad


def loss_supervised(
    table: PredictionTable,
    labels: LabeledSubset,
    params: CombinerParams,
    class_weighting: ClassWeighting = ClassWeighting.NONE,
) -> float:
    require_classification(table)
    if len(labels) == 0:
        raise InsufficientDataError("supervised loss needs at least one labeled sample")
    labels.check_bounds(table.n_samples)
    y0 = np.asarray(labels.targets, dtype=np.int64) - 1
    s = _sample_weights(y0, table.n_classes, class_weighting)
    x = one_hot(table.select_rows(labels.indices))
    return _sup_loss_grad(x, y0, s, params.weights)[0]


def loss_unsupervised(table: PredictionTable, params: CombinerParams, seed: SeedLike = 0) -> float:
    pseudo0 = consensus_pseudo_labels(table, params, seed) - 1
    return float(params.weights @ disagreement_rates(one_hot(table), pseudo0))


def loss_regularizer(params: CombinerParams) -> float:
    return float((1.0 - params.weights.sum()) ** 2)


# ---------------------------------------------------------------------------
# training


def _normalized(v: np.ndarray) -> np.ndarray:
    total = v.sum()
    return v / total if total > 0 else np.full(len(v), 1.0 / len(v))


def model_bca(labels0: np.ndarray, reference0: np.ndarray, n_classes: int) -> np.ndarray:
    """Balanced accuracy of every column of ``labels0`` against ``reference0`` (all 0-based)."""
    out = np.empty(labels0.shape[1])
    for j in range(labels0.shape[1]):
        r = per_class_recall(labels0[:, j] + 1, reference0 + 1, n_classes)
        out[j] = np.nanmean(r)
    return out


def initial_weights(
    table: PredictionTable, labels: LabeledSubset, mode: InitMode, seed: SeedLike = 0
) -> np.ndarray:
    mode = InitMode(mode)
    if mode is InitMode.AUTO:
        mode = InitMode.SUPERVISED_BCA if len(labels) else InitMode.VOTING_BCA
    m = table.n_models
    if mode is InitMode.UNIFORM:
        return np.full(m, 1.0 / m)
    if mode is InitMode.SUPERVISED_BCA:
        if len(labels) == 0:
            raise InsufficientDataError("supervised-bca initialisation needs labeled samples")
        y0 = np.asarray(labels.targets, dtype=np.int64) - 1
        return _normalized(model_bca(table.labels0[labels.indices], y0, table.n_classes))
    votes0 = plurality_vote(table, seed) - 1
    return _normalized(model_bca(table.labels0, votes0, table.n_classes))


def stacking_classification_train(
    table: PredictionTable,
    labels: LabeledSubset | None = None,
    cfg: ClassificationTrainConfig = ClassificationTrainConfig(),
    history: list[float] | None = None,
) -> CombinerParams:
    """Learn non-negative voting weights from labeled and/or unlabeled predictions.

    Minimises ``CE(labeled) + lambda1 * disagreement(all) + lambda2 * (1 - sum w)^2``
    by full-batch gradient descent, clamping weights at zero after each step.
    Pseudo-labels for the disagreement term are recomputed from the current
    weights every epoch and carry no gradient. Without labels the CE term is
    dropped.
    """
    require_classification(table)
    labels = labels if labels is not None else LabeledSubset.empty()
    labels.check_bounds(table.n_samples)
    if len(labels) == 0 and cfg.lambda1 == 0:
        raise ConfigError("no labels and lambda1 == 0: the objective does not depend on the data")
    rng = np.random.default_rng(cfg.seed)
    x = one_hot(table)
    sup = None
    if len(labels):
        y0 = np.asarray(labels.targets, dtype=np.int64) - 1
        sup = (labels.indices, y0, _sample_weights(y0, table.n_classes, cfg.class_weighting))

    w = initial_weights(table, labels, cfg.init_mode, rng)
    lr = cfg.learning_rate
    for step in range(cfg.epochs):
        pseudo0 = argmax_random_ties(class_scores_from_tensor(x, w), rng)
        loss, grad = combined_objective(x, w, pseudo0, cfg.lambda1, cfg.lambda2, sup)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}", step)
        if history is not None:
            history.append(loss)
        w = np.maximum(w - lr * grad, 0.0)
    if not np.all(np.isfinite(w)):
        raise DivergenceError("non-finite weights after training", cfg.epochs)
    return CombinerParams(w)
