"""Immutable tabular dataset, CSV ingestion and variable-role bookkeeping."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data (bad treatment codes, missing cells...)."""


@dataclass(frozen=True)
class Dataset:
    """One analysis table: outcome, binary treatment and candidate biomarkers.

    Immutable after construction; safe to share across concurrent fits.
    """

    outcome: np.ndarray
    treatment: np.ndarray
    biomarkers: np.ndarray
    names: tuple[str, ...]
    outcome_kind: str = "continuous"
    outcome_name: str = "y"
    treatment_name: str = "treatment"

    def __post_init__(self):
        y = np.asarray(self.outcome, dtype=float)
        t = np.asarray(self.treatment, dtype=float)
        x = np.asarray(self.biomarkers, dtype=float)
        if x.ndim != 2:
            raise DataError("biomarkers must be a 2-d matrix")
        n = y.shape[0]
        if t.shape[0] != n or x.shape[0] != n:
            raise DataError("outcome, treatment and biomarkers disagree on n")
        if len(self.names) != x.shape[1]:
            raise DataError("names do not match the biomarker column count")
        if not np.isin(t, (0.0, 1.0)).all():
            raise DataError("treatment must be 0/1")
        if t.sum() == 0 or t.sum() == n:
            raise DataError("both treatment arms must be non-empty")
        if not (np.isfinite(y).all() and np.isfinite(x).all()):
            raise DataError("non-finite values in outcome or biomarkers")
        if self.outcome_kind not in ("continuous", "binary"):
            raise DataError(f"unknown outcome_kind {self.outcome_kind!r}")
        if self.outcome_kind == "binary" and not np.isin(y, (0.0, 1.0)).all():
            raise DataError("binary outcome must contain only 0/1")
        for arr in (y, t, x):
            arr.setflags(write=False)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "biomarkers", x)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def p(self) -> int:
        return self.biomarkers.shape[1]

    def binary_columns(self) -> np.ndarray:
        """Boolean mask of biomarker columns whose values lie in {0, 1}."""
        return np.array(
            [np.isin(self.biomarkers[:, j], (0.0, 1.0)).all() for j in range(self.p)]
        )

    def column(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown biomarker column {name!r}") from None

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            outcome=self.outcome[idx],
            treatment=self.treatment[idx],
            biomarkers=self.biomarkers[idx],
            names=self.names,
            outcome_kind=self.outcome_kind,
            outcome_name=self.outcome_name,
            treatment_name=self.treatment_name,
        )

    def sidecar(self) -> dict:
        """Role/metadata document for reproducibility (JSON-serializable)."""
        return {
            "n": self.n,
            "outcome": self.outcome_name,
            "treatment": self.treatment_name,
            "biomarkers": list(self.names),
            "outcome_kind": self.outcome_kind,
        }


@dataclass(frozen=True)
class CaseWeights:
    """Non-negative case weights, optionally rescaled so they sum to n."""

    w: np.ndarray
    rescaled: bool = False

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1:
            raise DataError("weights must be a vector")
        if (w < 0).any() or not np.isfinite(w).all():
            raise DataError("weights must be finite and non-negative")
        if w.sum() <= 0:
            raise DataError("total weight must be positive")
        if self.rescaled:
            n = w.shape[0]
            if abs(w.sum() - n) >= 1e-9 * n:
                raise DataError("rescaled weights must sum to n")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def unit(cls, n: int) -> "CaseWeights":
        return cls(np.ones(n), rescaled=True)

    def rescale(self, total: float | None = None) -> "CaseWeights":
        """Scale so weights sum to `total` (default: count of positive-weight rows)."""
        if total is None:
            total = float(np.count_nonzero(self.w))
        w = self.w * (total / self.w.sum())
        return CaseWeights(w, rescaled=abs(total - len(w)) < 1e-12)


def effect_code(treatment: np.ndarray) -> np.ndarray:
    """Map a 0/1 treatment vector to the -1/+1 coding used by the base model."""
    t = np.asarray(treatment, dtype=float)
    if not np.isin(t, (0.0, 1.0)).all():
        raise DataError("treatment must be 0/1")
    return 2.0 * t - 1.0


def load_csv(
    path,
    outcome: str,
    treatment: str,
    biomarkers: list[str] | None = None,
    outcome_kind: str = "continuous",
) -> Dataset:
    """Read a comma-separated file with a header row into a Dataset.

    Rows with missing entries are rejected, never imputed. If `biomarkers`
    is None, every column other than outcome/treatment is used.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    for col in (outcome, treatment):
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    if biomarkers is None:
        biomarkers = [c for c in header if c not in (outcome, treatment)]
    if not biomarkers:
        raise DataError(f"{path}: no biomarker columns")
    for col in biomarkers:
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    pos = {c: header.index(c) for c in [outcome, treatment, *biomarkers]}

    def cell(row, col, rownum):
        raw = row[pos[col]].strip()
        if raw == "":
            raise DataError(f"{path}: missing value in column {col!r}, row {rownum}")
        try:
            return float(raw)
        except ValueError:
            raise DataError(
                f"{path}: non-numeric value {raw!r} in column {col!r}, row {rownum}"
            ) from None

    y, t, x = [], [], []
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        tv = cell(row, treatment, i)
        if tv not in (0.0, 1.0):
            raise DataError(f"{path}: treatment must be 0/1 (got {tv!r} in row {i})")
        y.append(cell(row, outcome, i))
        t.append(tv)
        x.append([cell(row, c, i) for c in biomarkers])
    return Dataset(
        outcome=np.array(y),
        treatment=np.array(t),
        biomarkers=np.array(x),
        names=tuple(biomarkers),
        outcome_kind=outcome_kind,
        outcome_name=outcome,
        treatment_name=treatment,
    )


def save_csv(data: Dataset, path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write a Dataset (plus optional extra columns) as CSV; values use repr
    so that load_csv(save_csv(d)) round-trips bit-exactly."""
    extra = extra or {}
    header = [data.outcome_name, data.treatment_name, *data.names, *extra]
    cols = [data.outcome, data.treatment] + [
        data.biomarkers[:, j] for j in range(data.p)
    ] + [np.asarray(v, dtype=float) for v in extra.values()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            writer.writerow([repr(float(c[i])) for c in cols])


def save_sidecar(data: Dataset, path, extra: dict | None = None) -> None:
    doc = data.sidecar()
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
