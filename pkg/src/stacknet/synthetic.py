"""Synthetic prediction pools with known per-model reliability.

Classification pools give every model the same recall on every class, so its
balanced accuracy equals the requested value. With ``correlation == 0`` models
are conditionally independent given the true label; a positive correlation
couples whether models are right through a shared per-sample difficulty
(Gaussian copula), leaving each model's accuracy unchanged. Regression pools
add (optionally correlated) Gaussian noise to a uniform ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .core import PredictionTable
from .errors import ConfigError


@dataclass(frozen=True)
class SyntheticPoolSpec:
    n_samples: int
    n_models: int
    # None for regression pools
    n_classes: int | None = 2
    # per-model balanced accuracy (classification) or error variance (regression)
    accuracy_profile: Sequence[float] = ()
    class_imbalance: float = 0.0
    correlation: float = 0.0
    seed: int = 0
    # regression only: constant target instead of uniform [0, 1]; clip outputs to [0, 1]
    constant_truth: float | None = None
    clip: bool = False

    @property
    def is_classification(self) -> bool:
        return self.n_classes is not None

    def validate(self) -> None:
        if self.n_samples < 1 or self.n_models < 1:
            raise ConfigError("need n_samples >= 1 and n_models >= 1")
        prof = np.asarray(self.accuracy_profile, dtype=float)
        if prof.shape != (self.n_models,):
            raise ConfigError(f"accuracy_profile needs {self.n_models} entries, got {prof.size}")
        if self.is_classification:
            if self.n_classes < 2:
                raise ConfigError("n_classes must be >= 2")
            if np.any((prof <= 0) | (prof > 1)):
                raise ConfigError("balanced accuracies must lie in (0, 1]")
            priors = class_priors(self.n_classes, self.class_imbalance)
            if np.any(priors <= 0):
                raise ConfigError(
                    f"class_imbalance {self.class_imbalance} infeasible for K={self.n_classes}"
                )
        elif np.any(prof <= 0):
            raise ConfigError("error variances must be > 0")
        if not 0 <= self.correlation < 1:
            raise ConfigError("correlation must lie in [0, 1)")


def class_priors(n_classes: int, imbalance: float) -> np.ndarray:
    """Class 1 gets ``(1 + b(K-1)) / K``, the rest share the remainder equally.

    For K=2 this is ``((1+b)/2, (1-b)/2)``, i.e. ``b = P[class 1] - P[class 2]``.
    """
    k = n_classes
    p = np.full(k, (1.0 - imbalance) / k)
    p[0] = (1.0 + imbalance * (k - 1)) / k
    return p


def generate_synthetic(spec: SyntheticPoolSpec) -> tuple[PredictionTable, np.ndarray]:
    """Return ``(table, truth)``; deterministic in ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    if spec.is_classification:
        return _classification_pool(spec, rng)
    return _regression_pool(spec, rng)


def _classification_pool(spec: SyntheticPoolSpec, rng: np.random.Generator):
    n, m, k = spec.n_samples, spec.n_models, spec.n_classes
    pi = np.asarray(spec.accuracy_profile, dtype=float)
    truth0 = rng.choice(k, size=n, p=class_priors(k, spec.class_imbalance))
    if spec.correlation > 0:
        rho = spec.correlation
        latent = np.sqrt(rho) * rng.standard_normal((n, 1)) + np.sqrt(1 - rho) * rng.standard_normal((n, m))
        correct = ndtr(latent) < pi
    else:
        correct = rng.random((n, m)) < pi
    # wrong answers: uniform over the other K-1 classes
    offset = rng.integers(1, k, size=(n, m)) if k > 2 else np.ones((n, m), dtype=np.int64)
    wrong = (truth0[:, None] + offset) % k
    labels0 = np.where(correct, truth0[:, None], wrong)
    table = PredictionTable.classification(labels0 + 1, k)
    return table, truth0 + 1


def _regression_pool(spec: SyntheticPoolSpec, rng: np.random.Generator):
    n, m = spec.n_samples, spec.n_models
    sd = np.sqrt(np.asarray(spec.accuracy_profile, dtype=float))
    if spec.constant_truth is None:
        truth = rng.random(n)
    else:
        truth = np.full(n, float(spec.constant_truth))
    # shared factor gives pairwise correlation rho between every pair of errors
    rho = spec.correlation
    z = np.sqrt(1 - rho) * rng.standard_normal((n, m)) + np.sqrt(rho) * rng.standard_normal((n, 1))
    values = truth[:, None] + z * sd
    if spec.clip:
        values = np.clip(values, 0.0, 1.0)
        lo, hi = 0.0, 1.0
    else:
        lo, hi = min(0.0, float(values.min())), max(1.0, float(values.max()))
    return PredictionTable.regression(values, lo, hi), truth
