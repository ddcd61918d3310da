"""Unsupervised label-aggregation baselines: WAwA and Dawid-Skene EM."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .classification import argmax_random_ties, plurality_vote, weighted_vote
from .core import CombinerParams, PredictionTable, one_hot, require_classification
from .errors import ConfigError, NumericalError


def wawa(table: PredictionTable, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Worker Agreement with Aggregate.

    Reliability of each model is its agreement rate with the plurality vote;
    the final labels are a vote weighted by those reliabilities.
    """
    votes = plurality_vote(table, seed)
    reliability = np.mean(table.values == votes[:, None], axis=0)
    labels = weighted_vote(table, CombinerParams(reliability), seed)
    return labels, reliability


@dataclass(frozen=True)
class EMConfig:
    max_iters: int = 100
    tol: float = 1e-6
    # additive pseudo-count for priors and confusion rows
    smoothing: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if self.smoothing < 0:
            raise ConfigError("smoothing must be >= 0")


@dataclass
class DawidSkeneResult:
    posterior: np.ndarray  # (N, K)
    confusion: np.ndarray  # (M, K, K): [j, true, predicted]
    priors: np.ndarray  # (K,)
    log_likelihood: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    def labels(self, seed: int = 0) -> np.ndarray:
        return argmax_random_ties(self.posterior, np.random.default_rng(seed)) + 1


def _m_step(x: np.ndarray, post: np.ndarray, alpha: float):
    n, k, m = x.shape
    priors = (post.sum(axis=0) + alpha) / (n + k * alpha)
    # counts[j, true, pred] = sum_i post[i, true] * x[i, pred, j]
    counts = np.einsum("it,ipj->jtp", post, x)
    confusion = (counts + alpha) / (counts.sum(axis=2, keepdims=True) + k * alpha)
    return priors, confusion


def _log_joint(labels0: np.ndarray, priors: np.ndarray, confusion: np.ndarray) -> np.ndarray:
    """log P(y_i = t, h_i) for every sample and true class: (N, K)."""
    with np.errstate(divide="ignore"):
        log_conf = np.log(confusion)
        log_prior = np.log(priors)
    m = labels0.shape[1]
    # log_conf[j, :, h_ij] gathered to (N, M, K) and summed over models
    per_model = log_conf[np.arange(m)[None, :], :, labels0]
    return log_prior[None, :] + per_model.sum(axis=1)


def dawid_skene(table: PredictionTable, cfg: EMConfig = EMConfig()) -> DawidSkeneResult:
    """Maximum a posteriori Dawid-Skene by EM, initialised from vote fractions.

    With smoothing ``a`` the M-step is the MAP update under a symmetric
    Dirichlet(a + 1) prior, so ``log_likelihood + a * (sum log confusion +
    sum log priors)`` is what EM increases monotonically; that objective is
    checked after every iteration and recorded in ``objective``.
    """
    require_classification(table)
    x = one_hot(table)
    n, k, m = x.shape
    alpha = cfg.smoothing
    post = x.sum(axis=2) / m
    result = DawidSkeneResult(post, np.zeros((m, k, k)), np.zeros(k))
    for it in range(1, cfg.max_iters + 1):
        priors, confusion = _m_step(x, post, alpha)
        joint = _log_joint(table.labels0, priors, confusion)
        norm = logsumexp(joint, axis=1, keepdims=True)
        ll = float(norm.sum())
        with np.errstate(divide="ignore"):
            penalty = alpha * (float(np.log(confusion).sum()) + float(np.log(priors).sum())) if alpha else 0.0
        obj = ll + penalty
        if not np.isfinite(obj):
            raise NumericalError(f"non-finite log-likelihood at EM iteration {it}")
        if result.objective and obj < result.objective[-1] - 1e-9 * max(1.0, abs(obj)):
            raise NumericalError(
                f"EM objective decreased at iteration {it}: {result.objective[-1]!r} -> {obj!r}"
            )
        result.log_likelihood.append(ll)
        result.objective.append(obj)
        new_post = np.exp(joint - norm)
        change = float(np.max(np.abs(new_post - post)))
        post = new_post
        result.n_iter = it
        if change < cfg.tol:
            result.converged = True
            break
    result.posterior, result.confusion, result.priors = post, confusion, priors
    return result
