"""Reliability estimates for base classifiers.

Unsupervised (binary only): under conditional independence the off-diagonal
part of the covariance of +/-1-coded predictions is rank one, with principal
eigenvector proportional to ``2 * pi_j - 1`` (``pi_j`` = balanced accuracy).
The diagonal is unknown, so it is imputed from triple products before a
power iteration extracts the eigenpair.

Supervised: per-model balanced accuracy on the labeled rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .classification import model_bca
from .core import CombinerParams, LabeledSubset, PredictionTable, require_classification
from .errors import InsufficientDataError, NoSignalError, NumericalError, UnsupportedCardinalityError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PredictionCovariance:
    q: np.ndarray
    mu: np.ndarray
    n_samples: int
    # P[class 1] - P[class 2]; informational only, None when unknown
    class_imbalance: float | None = None


@dataclass(frozen=True, eq=False)
class SpectralEstimate:
    eigenvector: np.ndarray
    eigenvalue: float
    sign_resolved: bool = False


def signed_predictions(table: PredictionTable) -> np.ndarray:
    """Code class 1 as +1 and class 2 as -1."""
    require_classification(table)
    if table.n_classes != 2:
        raise UnsupportedCardinalityError(
            f"spectral estimation supports binary tables only, got K={table.n_classes}"
        )
    return np.where(table.values == 1, 1.0, -1.0)


def prediction_covariance(table: PredictionTable, class_imbalance: float | None = None) -> PredictionCovariance:
    z = signed_predictions(table)
    mu = z.mean(axis=0)
    zc = z - mu
    q = zc.T @ zc / len(z)
    return PredictionCovariance((q + q.T) / 2, mu, len(z), class_imbalance)


def impute_diagonal(q: np.ndarray, threshold: float = 1e-6) -> np.ndarray:
    """Replace the diagonal of ``q`` by its rank-one completion.

    For each j, ``R_jj`` is the least-squares fit of ``R_jj * q_kl = q_jk * q_jl``
    over all pairs ``k < l`` distinct from j with ``|q_kl| > threshold``.
    """
    m = len(q)
    r = np.array(q, dtype=float, copy=True)
    off = ~np.eye(m, dtype=bool)
    if not np.any(np.abs(q[off]) > threshold):
        raise NoSignalError("all off-diagonal covariances are below threshold")
    for j in range(m):
        others = [k for k in range(m) if k != j]
        sub = q[np.ix_(others, others)]
        kk, ll = np.triu_indices(len(others), k=1)
        qkl = sub[kk, ll]
        ok = np.abs(qkl) > threshold
        if not ok.any():
            raise NoSignalError(f"no informative model pair to impute diagonal entry {j}")
        qjk = q[j, others][kk[ok]]
        qjl = q[j, others][ll[ok]]
        r[j, j] = np.sum(qkl[ok] * qjk * qjl) / np.sum(qkl[ok] ** 2)
    return r


def power_iteration(a: np.ndarray, tol: float = 1e-10, max_iter: int = 10000) -> tuple[float, np.ndarray]:
    """Largest (algebraic) eigenpair of a symmetric matrix."""
    m = len(a)
    shift = 0.0
    for _ in range(2):
        b = a + shift * np.eye(m)
        v = np.ones(m) / np.sqrt(m)
        for _ in range(max_iter):
            u = b @ v
            norm = np.linalg.norm(u)
            if norm == 0:
                # start vector in the null space; restart from a fixed non-symmetric vector
                u = np.arange(1, m + 1, dtype=float)
                norm = np.linalg.norm(u)
            u /= norm
            if np.linalg.norm(u - v) < tol:
                v = u
                break
            v = u
        else:
            log.warning("power iteration did not converge in %d iterations", max_iter)
        lam = float(v @ a @ v)
        if lam >= 0 or shift:
            return lam, v
        # dominant eigenvalue was negative: shift the spectrum to make the top one dominant
        shift = -2.0 * lam
    raise NumericalError("power iteration failed")  # pragma: no cover


def rank_one_recover(
    cov: PredictionCovariance, tol: float = 1e-10, max_iter: int = 10000, threshold: float = 1e-6
) -> SpectralEstimate:
    q = np.asarray(cov.q, dtype=float)
    if len(q) < 3:
        raise InsufficientDataError(f"rank-one recovery needs at least 3 models, got {len(q)}")
    completed = impute_diagonal(q, threshold)
    lam, v = power_iteration(completed, tol, max_iter)
    return SpectralEstimate(v, lam, sign_resolved=False)


def resolve_sign(est: SpectralEstimate) -> SpectralEstimate:
    """Orient the eigenvector so that most entries are positive (most models beat chance)."""
    v = np.asarray(est.eigenvector, dtype=float)
    pos, neg = int(np.sum(v > 0)), int(np.sum(v < 0))
    flip = neg > pos or (neg == pos and v[np.argmax(np.abs(v))] < 0)
    return replace(est, eigenvector=-v if flip else v.copy(), eigenvalue=abs(est.eigenvalue), sign_resolved=True)


def assumption_risk(est: SpectralEstimate, margin: float = 0.2) -> bool:
    """True when the sign vote is too close to call: fewer than ``margin * M``
    more positive than negative entries. A pool where most models are worse
    than chance inverts the ranking without any other symptom."""
    v = np.asarray(est.eigenvector)
    return abs(int(np.sum(v > 0)) - int(np.sum(v < 0))) <= margin * len(v)


def spectral_weights(est: SpectralEstimate) -> CombinerParams:
    if not est.sign_resolved:
        raise ValueError("resolve the eigenvector sign before deriving weights")
    w = np.maximum(np.asarray(est.eigenvector, dtype=float), 0.0)
    if w.sum() <= 0:
        raise NoSignalError("no model has a positive reliability estimate")
    return CombinerParams(w / w.sum())


def spectral_bca(est: SpectralEstimate, class_imbalance: float = 0.0) -> np.ndarray:
    """Balanced accuracy implied by the eigenpair: ``(1 + sqrt(lam / (1 - b^2)) * v_j) / 2``."""
    scale = np.sqrt(max(est.eigenvalue, 0.0) / (1.0 - class_imbalance**2))
    return (1.0 + scale * np.asarray(est.eigenvector)) / 2.0


def spectral_reliability(table: PredictionTable) -> tuple[SpectralEstimate, CombinerParams]:
    est = resolve_sign(rank_one_recover(prediction_covariance(table)))
    return est, spectral_weights(est)


def supervised_bca_estimate(table: PredictionTable, labels: LabeledSubset) -> np.ndarray:
    """Per-model balanced accuracy on the labeled rows only."""
    require_classification(table)
    if len(labels) == 0:
        raise InsufficientDataError("supervised BCA estimate needs labeled samples")
    labels.check_bounds(table.n_samples)
    y0 = np.asarray(labels.targets, dtype=np.int64) - 1
    present = np.unique(y0)
    if len(present) < table.n_classes:
        log.warning(
            "classes %s absent from the labeled subset; BCA averaged over present classes",
            sorted(set(range(1, table.n_classes + 1)) - set(present + 1)),
        )
    return model_bca(table.labels0[labels.indices], y0, table.n_classes)
