"""Shared data model: prediction tables, labeled subsets, combiner parameters.

Classification labels are stored 1-based (``1..K``) to match the on-disk
schema; the numerical code works on the 0-based view from
:attr:`PredictionTable.labels0`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import (
    InvalidRangeError,
    KindMismatchError,
    ParseError,
    ShapeError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Regression:
    """Continuous ratings declared to lie in ``[lo, hi]``."""

    lo: float = 0.0
    hi: float = 1.0


@dataclass(frozen=True)
class Classification:
    """Hard labels in ``1..n_classes``; ``label_names[k-1]`` is the original label of class k."""

    n_classes: int
    label_names: tuple[str, ...] | None = None


Kind = Union[Regression, Classification]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PredictionTable:
    """N x M matrix of base-model outputs (rows are samples, columns are models)."""

    values: np.ndarray
    kind: Kind
    model_ids: tuple[str, ...] = ()
    sample_ids: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ShapeError(f"prediction table must be 2-D, got shape {values.shape}")
        if isinstance(self.kind, Classification):
            if values.size and not np.all(np.equal(np.mod(values, 1), 0)):
                raise ShapeError("classification table holds non-integer labels")
            values = values.astype(np.int64)
        else:
            values = values.astype(np.float64)
        object.__setattr__(self, "values", _readonly(values))
        n, m = values.shape
        model_ids = tuple(str(x) for x in self.model_ids) or tuple(f"m{j + 1}" for j in range(m))
        sample_ids = tuple(str(x) for x in self.sample_ids) or tuple(str(i) for i in range(n))
        object.__setattr__(self, "model_ids", model_ids)
        object.__setattr__(self, "sample_ids", sample_ids)

    @classmethod
    def regression(cls, values, lo: float = 0.0, hi: float = 1.0, model_ids=(), sample_ids=()):
        return cls(np.asarray(values, dtype=float), Regression(lo, hi), tuple(model_ids), tuple(sample_ids))

    @classmethod
    def classification(cls, values, n_classes: int, model_ids=(), sample_ids=(), label_names=None):
        names = tuple(label_names) if label_names is not None else None
        return cls(np.asarray(values), Classification(n_classes, names), tuple(model_ids), tuple(sample_ids))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_models(self) -> int:
        return self.values.shape[1]

    @property
    def is_classification(self) -> bool:
        return isinstance(self.kind, Classification)

    @property
    def n_classes(self) -> int:
        if not self.is_classification:
            raise KindMismatchError("regression tables have no classes")
        return self.kind.n_classes

    @property
    def labels0(self) -> np.ndarray:
        """0-based class labels, shape (N, M)."""
        if not self.is_classification:
            raise KindMismatchError("regression tables have no labels")
        return self.values - 1

    def select_models(self, columns: Sequence[int]) -> PredictionTable:
        columns = list(columns)
        return PredictionTable(
            self.values[:, columns],
            self.kind,
            tuple(self.model_ids[j] for j in columns),
            self.sample_ids,
        )

    def select_rows(self, rows: Sequence[int]) -> PredictionTable:
        rows = list(rows)
        return PredictionTable(
            self.values[rows, :],
            self.kind,
            self.model_ids,
            tuple(self.sample_ids[i] for i in rows),
        )

    def with_columns(self, extra: np.ndarray, ids: Sequence[str]) -> PredictionTable:
        extra = np.asarray(extra).reshape(self.n_samples, -1)
        return PredictionTable(
            np.hstack([self.values, extra]),
            self.kind,
            self.model_ids + tuple(ids),
            self.sample_ids,
        )

    def replace_columns(self, columns: dict[int, np.ndarray]) -> PredictionTable:
        values = np.array(self.values, copy=True)
        for j, col in columns.items():
            values[:, j] = col
        return PredictionTable(values, self.kind, self.model_ids, self.sample_ids)


@dataclass(frozen=True, eq=False)
class LabeledSubset:
    """Row indices of a table paired with their ground-truth targets."""

    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    targets: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64).ravel()
        targets = np.asarray(self.targets).ravel()
        if len(indices) != len(targets):
            raise ShapeError(f"{len(indices)} indices but {len(targets)} targets")
        if len(np.unique(indices)) != len(indices):
            raise ShapeError("labeled indices must be unique")
        object.__setattr__(self, "indices", _readonly(indices))
        object.__setattr__(self, "targets", _readonly(targets))

    @classmethod
    def empty(cls) -> LabeledSubset:
        return cls()

    @classmethod
    def from_truth(cls, truth, indices) -> LabeledSubset:
        truth = np.asarray(truth)
        indices = np.asarray(indices, dtype=np.int64)
        return cls(indices, truth[indices])

    def __len__(self) -> int:
        return len(self.indices)

    def check_bounds(self, n_samples: int) -> None:
        if len(self) and (self.indices.min() < 0 or self.indices.max() >= n_samples):
            raise ShapeError(f"labeled index out of range [0, {n_samples})")


@dataclass(frozen=True, eq=False)
class CombinerParams:
    """Per-model weights, plus a bias for regression combiners (``None`` for classification)."""

    weights: np.ndarray
    bias: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(np.asarray(self.weights, dtype=np.float64).ravel()))
        if self.bias is not None:
            object.__setattr__(self, "bias", float(self.bias))

    def __len__(self) -> int:
        return len(self.weights)


@dataclass
class ValidationReport:
    shape: tuple[int, int]
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_table(table: PredictionTable) -> ValidationReport:
    """Check a table against its declared kind; never raises."""
    report = ValidationReport(shape=table.values.shape)
    err = report.errors
    n, m = table.values.shape
    if n < 1 or m < 1:
        err.append(f"empty table: N={n}, M={m}")
    if len(table.model_ids) != m:
        err.append(f"{len(table.model_ids)} model ids for {m} columns")
    if len(table.sample_ids) != n:
        err.append(f"{len(table.sample_ids)} sample ids for {n} rows")
    for name, ids in (("model", table.model_ids), ("sample", table.sample_ids)):
        seen, dup = set(), set()
        for x in ids:
            (dup if x in seen else seen).add(x)
        if dup:
            err.append(f"duplicate {name} ids: {sorted(dup)[:5]}")

    kind = table.kind
    if isinstance(kind, Classification):
        if kind.n_classes < 2:
            err.append(f"classification needs K >= 2, got {kind.n_classes}")
        bad = (table.values < 1) | (table.values > kind.n_classes)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            err.append(
                f"{int(bad.sum())} labels outside 1..{kind.n_classes} "
                f"(first at row {i}, column {j}: {table.values[i, j]})"
            )
        if kind.label_names is not None and len(kind.label_names) != kind.n_classes:
            err.append(f"{len(kind.label_names)} label names for K={kind.n_classes}")
    else:
        if not np.all(np.isfinite(table.values)):
            err.append(f"{int((~np.isfinite(table.values)).sum())} non-finite entries")
        if not kind.hi > kind.lo:
            err.append(f"invalid range [{kind.lo}, {kind.hi}]")
        else:
            with np.errstate(invalid="ignore"):
                bad = (table.values < kind.lo) | (table.values > kind.hi)
            if bad.any():
                err.append(f"{int(bad.sum())} entries outside [{kind.lo}, {kind.hi}]")
    return report


def require_regression(table: PredictionTable) -> None:
    if table.is_classification:
        raise KindMismatchError("operation requires a regression table")


def require_classification(table: PredictionTable) -> None:
    if not table.is_classification:
        raise KindMismatchError("operation requires a classification table")


def normalize_minmax(table: PredictionTable, lo: float | None = None, hi: float | None = None) -> PredictionTable:
    """Clip to ``[lo, hi]`` and rescale to ``[0, 1]``.

    Missing bounds fall back to the observed min/max, with a warning, since
    the valid answer range is dataset knowledge.
    """
    require_regression(table)
    if lo is None or hi is None:
        log.warning("no value range given; using observed min/max of the table")
        lo = float(table.values.min()) if lo is None else lo
        hi = float(table.values.max()) if hi is None else hi
    if not hi > lo:
        raise InvalidRangeError(f"need hi > lo, got lo={lo}, hi={hi}")
    v = (np.clip(table.values, lo, hi) - lo) / (hi - lo)
    return PredictionTable(v, Regression(0.0, 1.0), table.model_ids, table.sample_ids)


def normalize_targets(y, lo: float, hi: float) -> np.ndarray:
    if not hi > lo:
        raise InvalidRangeError(f"need hi > lo, got lo={lo}, hi={hi}")
    return (np.clip(np.asarray(y, dtype=float), lo, hi) - lo) / (hi - lo)


def one_hot(table: PredictionTable) -> np.ndarray:
    """Binary tensor of shape (N, K, M); ``out[i, k, j] == 1`` iff model j predicts class k+1 on sample i."""
    require_classification(table)
    labels = table.labels0
    n, m = labels.shape
    out = np.zeros((n, table.n_classes, m), dtype=np.float64)
    ii, jj = np.indices((n, m))
    out[ii, labels, jj] = 1.0
    return out


# ---------------------------------------------------------------------------
# parameter files: "bias=<float>" then one "weight.<model_id>=<float>" per model


def format_params(params: CombinerParams, model_ids: Sequence[str]) -> str:
    if len(params) != len(model_ids):
        raise ShapeError(f"{len(params)} weights for {len(model_ids)} models")
    lines = []
    if params.bias is not None:
        lines.append(f"bias={params.bias!r}")
    lines += [f"weight.{mid}={float(w)!r}" for mid, w in zip(model_ids, params.weights)]
    return "\n".join(lines) + "\n"


def parse_params(text: str) -> tuple[CombinerParams, tuple[str, ...]]:
    bias = None
    ids, weights = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw!r}", lineno)
        key, value = line.rsplit("=", 1)
        try:
            x = float(value)
        except ValueError:
            raise ParseError(f"not a number: {value!r}", lineno) from None
        if key == "bias":
            bias = x
        elif key.startswith("weight."):
            ids.append(key[len("weight."):])
            weights.append(x)
        else:
            raise ParseError(f"unknown key {key!r}", lineno)
    return CombinerParams(np.array(weights), bias), tuple(ids)


def save_params(path, params: CombinerParams, model_ids: Sequence[str]) -> None:
    Path(path).write_text(format_params(params, model_ids), encoding="utf-8")


def load_params(path) -> tuple[CombinerParams, tuple[str, ...]]:
    return parse_params(Path(path).read_text(encoding="utf-8"))
