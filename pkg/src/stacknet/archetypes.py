"""HELM-like synthetic pool archetypes for ranking, attack and pruning experiments.

Each archetype spaces ten models' balanced accuracies linearly between the
worst and best single model of one HELM classification task, and sets the
shared-difficulty correlation so that plain plurality voting reaches the
voting accuracy observed on that task (fitted by root-finding on 4 x 20000
samples; LSAT has no root because its models sit at chance, so it stays
conditionally independent).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .synthetic import SyntheticPoolSpec


@dataclass(frozen=True)
class Archetype:
    name: str
    n_classes: int
    worst: float
    best: float
    voting: float
    correlation: float
    # size of the task's evaluation set
    n_samples: int = 2000

    def profile(self, n_models: int = 10, rng: np.random.Generator | None = None) -> np.ndarray:
        pi = np.linspace(self.worst, self.best, n_models)
        if rng is not None:
            rng.shuffle(pi)
        return pi

    def spec(self, seed: int, n_samples: int | None = None, n_models: int = 10) -> SyntheticPoolSpec:
        rng = np.random.default_rng(seed)
        return SyntheticPoolSpec(
            n_samples=n_samples or self.n_samples,
            n_models=n_models,
            n_classes=self.n_classes,
            accuracy_profile=tuple(self.profile(n_models, rng)),
            correlation=self.correlation,
            seed=seed,
        )


ARCHETYPES: tuple[Archetype, ...] = (
    Archetype("boolq", 2, 0.6413, 0.8921, 0.8729, 0.32, 5000),
    Archetype("civilcomments", 2, 0.5091, 0.6512, 0.6439, 0.17, 45000),
    Archetype("entitymatching", 2, 0.6174, 0.9576, 0.9201, 0.24, 1400),
    Archetype("imdb", 2, 0.9337, 0.9625, 0.9717, 0.67, 1000),
    Archetype("legalsupport", 2, 0.5377, 0.6526, 0.6464, 0.30, 1000),
    Archetype("lsat", 5, 0.1907, 0.2438, 0.2159, 0.0, 461),
    Archetype("mmlu", 4, 0.3551, 0.5948, 0.5460, 0.85, 1641),
    Archetype("raft", 2, 0.7677, 0.8858, 0.8806, 0.58, 1348),
)


def archetype(name: str) -> Archetype:
    for a in ARCHETYPES:
        if a.name == name:
            return a
    raise KeyError(f"unknown archetype {name!r}; choose from {[a.name for a in ARCHETYPES]}")
