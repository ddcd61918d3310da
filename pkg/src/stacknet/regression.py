"""Regression combiners: uniform averaging, covariance-optimal weights, and the
trainable weighted-sum-plus-bias combiner fitted by projected gradient descent.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import CombinerParams, LabeledSubset, PredictionTable, require_regression
from .errors import ConfigError, DivergenceError, InsufficientDataError, ShapeError

log = logging.getLogger(__name__)


class IllConditionedWarning(UserWarning):
    """Error covariance too ill-conditioned to invert; inverse-variance weights used instead."""


@dataclass(frozen=True, eq=False)
class ErrorCovariance:
    matrix: np.ndarray
    estimated_from: int


@dataclass(frozen=True)
class RegressionTrainConfig:
    learning_rate: float = 0.05
    epochs: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


def uniform_average(table: PredictionTable) -> np.ndarray:
    require_regression(table)
    return table.values.mean(axis=1)


def estimate_error_covariance(table: PredictionTable, labels: LabeledSubset) -> ErrorCovariance:
    """Population (1/N_l) second moment of per-model errors on the labeled rows."""
    require_regression(table)
    if len(labels) < 2:
        raise InsufficientDataError(f"need at least 2 labeled samples, got {len(labels)}")
    labels.check_bounds(table.n_samples)
    err = table.values[labels.indices] - np.asarray(labels.targets, dtype=float)[:, None]
    c = err.T @ err / len(labels)
    c = (c + c.T) / 2
    return ErrorCovariance(c, len(labels))


def inverse_variance_weights(cov: ErrorCovariance) -> CombinerParams:
    d = np.diag(np.asarray(cov.matrix, dtype=float))
    zero = np.flatnonzero(d <= 0)
    if zero.size:
        # a model with no error dominates everything else
        w = np.zeros_like(d)
        w[zero[0]] = 1.0
        return CombinerParams(w, 0.0)
    inv = 1.0 / d
    return CombinerParams(inv / inv.sum(), 0.0)


def optimal_weights_covariance(cov: ErrorCovariance, max_condition: float = 1e12) -> CombinerParams:
    """Weights ``C^-1 1 / (1^T C^-1 1)`` minimising ``w^T C w`` subject to ``sum(w) == 1``.

    Weights are not sign-constrained. Falls back to inverse-variance weights
    (with :class:`IllConditionedWarning`) when ``cond(C) > max_condition``.
    """
    c = np.asarray(cov.matrix, dtype=float)
    cond = np.linalg.cond(c) if c.size else np.inf
    if not np.isfinite(cond) or cond > max_condition:
        warnings.warn(
            f"error covariance condition number {cond:.3g} exceeds {max_condition:.3g}; "
            "falling back to inverse-variance weights",
            IllConditionedWarning,
            stacklevel=2,
        )
        return inverse_variance_weights(cov)
    row = np.linalg.solve(c, np.ones(len(c)))
    return CombinerParams(row / row.sum(), 0.0)


def combination_error(weights, cov: ErrorCovariance) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w @ cov.matrix @ w)


def regression_loss_and_grad(h: np.ndarray, y: np.ndarray, w: np.ndarray, b: float):
    """MSE of ``h @ w + b`` against ``y`` and its gradient w.r.t. ``(w, b)``."""
    n = len(y)
    # overflow surfaces as a non-finite loss, which training reports as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        r = h @ w + b - y
        loss = float(r @ r / n)
        gw = 2.0 / n * (h.T @ r)
        gb = 2.0 / n * float(r.sum())
    return loss, gw, gb


def stacking_regression_train(
    table: PredictionTable,
    labels: LabeledSubset,
    cfg: RegressionTrainConfig = RegressionTrainConfig(),
    history: list[float] | None = None,
) -> CombinerParams:
    """Fit non-negative weights and bias by full-batch projected gradient descent.

    Starts from the uniform average (``w = 1/M``, ``b = 0``) and clamps both
    to be non-negative after every step. If ``history`` is given, the
    training loss before each step and after the last one is appended to it.
    """
    require_regression(table)
    if len(labels) == 0:
        raise InsufficientDataError("regression training needs at least one labeled sample")
    labels.check_bounds(table.n_samples)
    h = table.values[labels.indices]
    y = np.asarray(labels.targets, dtype=float)
    m = table.n_models
    w = np.full(m, 1.0 / m)
    b = 0.0
    lr = cfg.learning_rate
    for step in range(cfg.epochs):
        loss, gw, gb = regression_loss_and_grad(h, y, w, b)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}", step)
        if history is not None:
            history.append(loss)
        w = np.maximum(w - lr * gw, 0.0)
        b = max(b - lr * gb, 0.0)
    loss, _, _ = regression_loss_and_grad(h, y, w, b)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss at step {cfg.epochs}", cfg.epochs)
    if history is not None:
        history.append(loss)
    return CombinerParams(w, b)


def stacking_regression_predict(table: PredictionTable, params: CombinerParams) -> np.ndarray:
    require_regression(table)
    if len(params) != table.n_models:
        raise ShapeError(f"{len(params)} weights for {table.n_models} models")
    out = table.values @ params.weights + (params.bias or 0.0)
    return np.clip(out, 0.0, 1.0)
