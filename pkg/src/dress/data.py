"""CSV ingestion and labeled/unlabeled/test splitting for classification runs.

Spambase is expected as the UCI ``spambase.data`` file (57 numeric columns then
a 0/1 label, no header) or the kernlab export (header row, last column
``type`` with values ``spam``/``nonspam``).  Neither is bundled.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, IngestError
from .estimators import LabeledData

MISSING_TOKENS = frozenset({"", "na", "nan", "?", "null"})
SPAMBASE_SOURCE = (
    "UCI Machine Learning Repository, Spambase (id 94): "
    "https://archive.ics.uci.edu/dataset/94/spambase (file spambase.data)"
)


@dataclass(frozen=True)
class TabularDataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    n_rejected: int = 0
    rejected_rows: tuple = ()

    @property
    def n_total(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _same_label(a: str, b: str) -> bool:
    if a == b:
        return True
    return _is_number(a) and _is_number(b) and float(a) == float(b)


def load_csv(path, label_column=-1, positive_label="1", has_header=None) -> TabularDataset:
    """Read a numeric CSV with one binary label column.

    ``label_column`` is an index or a header name.  Rows with missing cells are
    dropped and counted; any other non-numeric feature cell is an error.
    Rows are reported 1-based as they appear in the file.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"data file not found: {path}")
    try:
        with path.open(newline="") as fh:
            rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in r)]
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"cannot parse {path}: {exc}") from exc
    if not rows:
        raise IngestError(f"{path} contains no rows")

    width = len(rows[0][1])
    if width < 2:
        raise IngestError(f"{path}: need at least one feature column and a label column", row=rows[0][0])
    if has_header is None:
        first = [c.strip() for c in rows[0][1]]
        has_header = not all(_is_number(c) or c.lower() in MISSING_TOKENS for c in first[:-1])
    header = [c.strip() for c in rows[0][1]] if has_header else [f"x{k}" for k in range(width)]
    body = rows[1:] if has_header else rows

    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if label_column not in header:
            raise IngestError(f"label column {label_column!r} not in header")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column) % width
    feat_idx = [k for k in range(width) if k != label_idx]

    feats, labels, rejected = [], [], []
    for line, row in body:
        if len(row) != width:
            raise IngestError(f"row {line} has {len(row)} fields, expected {width}", row=line)
        cells = [c.strip() for c in row]
        if any(c.lower() in MISSING_TOKENS for c in cells):
            rejected.append(line)
            continue
        values = []
        for k in feat_idx:
            try:
                values.append(float(cells[k]))
            except ValueError:
                raise IngestError(
                    f"row {line}, column {k + 1} ({header[k]}): non-numeric value {cells[k]!r}",
                    row=line,
                    column=k + 1,
                ) from None
        feats.append(values)
        labels.append((line, cells[label_idx]))

    if not feats:
        raise IngestError(f"{path}: no complete rows")
    positive = str(positive_label)
    seen = []
    y = np.empty(len(labels))
    for k, (line, lab) in enumerate(labels):
        if not any(_same_label(lab, s) for s in seen):
            seen.append(lab)
            if len(seen) > 2:
                raise IngestError(f"row {line}: third distinct label value {lab!r}", row=line)
        y[k] = 1.0 if _same_label(lab, positive) else 0.0
    if len(seen) == 2 and not any(_same_label(s, positive) for s in seen):
        raise IngestError(f"labels {seen} do not include positive label {positive!r}")

    return TabularDataset(
        np.asarray(feats, dtype=float),
        y,
        tuple(header[k] for k in feat_idx),
        len(rejected),
        tuple(rejected),
    )


@dataclass
class SSLSplit:
    labeled: LabeledData
    unlabeled_x: np.ndarray
    test: LabeledData
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray
    test_idx: np.ndarray
    mean: np.ndarray = field(repr=False)
    scale: np.ndarray = field(repr=False)


def split_ssl(ds: TabularDataset, n: int, nprime: int, D: int, seed: int) -> SSLSplit:
    """Random disjoint labeled / unlabeled / test split on the first D features.

    Covariates are standardised with the mean and sd of the labeled plus
    unlabeled rows; constant columns are only centred.
    """
    if n < 1 or nprime < 1 or n + nprime > ds.n_total:
        raise ContractViolation(f"n={n}, n'={nprime} do not fit in {ds.n_total} rows")
    if not 1 <= D <= ds.dim:
        raise ContractViolation(f"D={D} outside 1..{ds.dim}")
    perm = np.random.default_rng(seed).permutation(ds.n_total)
    li, ui, ti = perm[:n], perm[n : n + nprime], perm[n + nprime :]
    X = ds.features[:, :D]
    train = X[np.concatenate([li, ui])]
    mean = train.mean(axis=0)
    scale = train.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    return SSLSplit(
        LabeledData(Z[li], ds.labels[li]),
        Z[ui],
        LabeledData(Z[ti], ds.labels[ti]),
        li,
        ui,
        ti,
        mean,
        scale,
    )
