"""CSV prediction tables and the dataset registry.

Table files have a header ``sample_id,<model ids...>[,label]``. Every
prediction cell must be present; the label column may be blank on rows
without ground truth.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    LabeledSubset,
    PredictionTable,
    normalize_minmax,
    normalize_targets,
)
from .errors import ConfigError, ParseError, SchemaError

LABEL_COLUMN = "label"


@dataclass(frozen=True)
class SchemaHints:
    """What a CSV holds: ``kind`` is "regression" or "classification".

    Regression tables are clipped to ``[lo, hi]`` and rescaled to ``[0, 1]``;
    missing bounds fall back to the observed range. ``n_classes`` is inferred
    from the distinct labels when omitted.
    """

    kind: str = "classification"
    lo: float | None = None
    hi: float | None = None
    n_classes: int | None = None
    normalize: bool = True

    def __post_init__(self):
        if self.kind not in ("regression", "classification"):
            raise SchemaError(f"unknown table kind {self.kind!r}")


def _sorted_labels(names: set[str]) -> list[str]:
    """Integers in numeric order, anything else lexicographically."""
    try:
        return sorted(names, key=lambda s: (float(s), s))
    except ValueError:
        return sorted(names)


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        rows = [(reader.line_num, [c.strip() for c in row]) for row in reader if row]
    if len(header) < 2 or header[0] != "sample_id":
        raise ParseError("header must start with sample_id followed by model ids", 1)
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header", 1)
    return header, rows


def load_csv(path, hints: SchemaHints = SchemaHints()) -> tuple[PredictionTable, LabeledSubset]:
    header, rows = _read_rows(path)
    has_label = header[-1] == LABEL_COLUMN
    model_ids = header[1:-1] if has_label else header[1:]
    if not model_ids:
        raise ParseError("no model columns", 1)
    width = len(header)
    sample_ids, cells, label_cells = [], [], []
    for line, row in rows:
        if len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", line)
        preds = row[1:1 + len(model_ids)]
        for mid, c in zip(model_ids, preds):
            if c == "":
                raise ParseError(f"missing prediction for model {mid!r}", line)
        sample_ids.append(row[0])
        cells.append((line, preds))
        label_cells.append(row[-1] if has_label else "")
    if not cells:
        raise ParseError("no data rows", 1)

    labeled = np.array([i for i, c in enumerate(label_cells) if c != ""], dtype=np.int64)
    if hints.kind == "regression":
        values = np.empty((len(cells), len(model_ids)))
        for i, (line, preds) in enumerate(cells):
            try:
                values[i] = [float(c) for c in preds]
            except ValueError as exc:
                raise ParseError(f"not a number: {exc}", line) from None
        targets = np.empty(len(labeled))
        for t, i in enumerate(labeled):
            try:
                targets[t] = float(label_cells[i])
            except ValueError:
                raise ParseError(f"not a number: {label_cells[i]!r}", cells[i][0]) from None
        table = PredictionTable.regression(
            values, *(_range(values, hints)), model_ids=model_ids, sample_ids=sample_ids
        )
        if hints.normalize:
            lo, hi = table.kind.lo, table.kind.hi
            table = normalize_minmax(table, lo, hi)
            targets = normalize_targets(targets, lo, hi)
        return table, LabeledSubset(labeled, targets)

    names = {c for _, preds in cells for c in preds} | {label_cells[i] for i in labeled}
    order = _sorted_labels(names)
    if hints.n_classes is not None:
        if len(order) > hints.n_classes:
            raise SchemaError(f"{len(order)} distinct labels but n_classes={hints.n_classes}")
        # pad with unseen integer labels so K matches the declared cardinality
        n = 1
        while len(order) < hints.n_classes:
            if str(n) not in names:
                order.append(str(n))
            n += 1
        order = _sorted_labels(set(order))
    code = {name: k + 1 for k, name in enumerate(order)}
    values = np.array([[code[c] for c in preds] for _, preds in cells], dtype=np.int64)
    targets = np.array([code[label_cells[i]] for i in labeled], dtype=np.int64)
    table = PredictionTable.classification(
        values, max(len(order), 2), model_ids=model_ids, sample_ids=sample_ids, label_names=order
        if len(order) >= 2 else None,
    )
    return table, LabeledSubset(labeled, targets)


def _range(values: np.ndarray, hints: SchemaHints) -> tuple[float, float]:
    lo = float(values.min()) if hints.lo is None else float(hints.lo)
    hi = float(values.max()) if hints.hi is None else float(hints.hi)
    return lo, hi


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def format_csv(table: PredictionTable, labels: LabeledSubset | None = None) -> str:
    """Inverse of :func:`load_csv`; classification labels are written by their original names."""
    names = None
    if table.is_classification and table.kind.label_names is not None:
        names = table.kind.label_names
    decode = (lambda v: names[int(v) - 1]) if names else _fmt
    label_col = [""] * table.n_samples
    if labels is not None:
        for i, t in zip(labels.indices, labels.targets):
            label_col[int(i)] = decode(t)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["sample_id", *table.model_ids] + ([LABEL_COLUMN] if labels is not None else [])
    writer.writerow(header)
    for i, sid in enumerate(table.sample_ids):
        row = [sid, *(decode(v) for v in table.values[i])]
        if labels is not None:
            row.append(label_col[i])
        writer.writerow(row)
    return buf.getvalue()


def save_csv(path, table: PredictionTable, labels: LabeledSubset | None = None) -> None:
    Path(path).write_text(format_csv(table, labels), encoding="utf-8")


# ---------------------------------------------------------------------------
# dataset registry: one line per dataset, "name = path kind [lo hi | K]"


DATA_DIR_ENV = "STACKNET_DATA_DIR"


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    path: Path
    hints: SchemaHints


def data_root() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def parse_registry(text: str, root: Path | None = None) -> dict[str, DatasetEntry]:
    """Parse registry lines such as ``boolq = helm/boolq.csv classification 2``
    or ``iclr2025 = reviews/iclr2025.csv regression 1 10``. Relative paths
    resolve against ``root`` (default: ``$STACKNET_DATA_DIR``)."""
    root = data_root() if root is None else Path(root)
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected name = path kind ..., got {raw!r}", lineno)
        name, rest = (s.strip() for s in line.split("=", 1))
        parts = rest.split()
        if len(parts) < 2:
            raise ParseError("need at least a path and a kind", lineno)
        path, kind, extra = Path(parts[0]), parts[1], parts[2:]
        try:
            if kind == "regression":
                if len(extra) not in (0, 2):
                    raise ParseError("regression entries take 'lo hi' or nothing", lineno)
                hints = SchemaHints("regression", *(float(e) for e in extra))
            elif kind == "classification":
                if len(extra) > 1:
                    raise ParseError("classification entries take at most K", lineno)
                hints = SchemaHints("classification", n_classes=int(extra[0]) if extra else None)
            else:
                raise SchemaError(f"line {lineno}: unknown kind {kind!r}")
        except ValueError as exc:
            if isinstance(exc, (ParseError, SchemaError)):
                raise
            raise ParseError(str(exc), lineno) from None
        out[name] = DatasetEntry(name, path if path.is_absolute() else root / path, hints)
    return out


def resolve_dataset(name_or_path: str, registry: dict[str, DatasetEntry] | None = None) -> DatasetEntry:
    """Look a dataset up by registry name, else treat it as a CSV path."""
    if registry is None:
        reg_file = data_root() / "registry.txt"
        registry = parse_registry(reg_file.read_text(encoding="utf-8")) if reg_file.exists() else {}
    if name_or_path in registry:
        return registry[name_or_path]
    path = Path(name_or_path)
    if not path.is_absolute() and not path.exists():
        path = data_root() / path
    if path.suffix != ".csv":
        raise ConfigError(f"unknown dataset {name_or_path!r}: not in registry and not a .csv path")
    return DatasetEntry(path.stem, path, SchemaHints())
