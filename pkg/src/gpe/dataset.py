"""Data ingestion and the centering convention used by every estimator.

A :class:`Dataset` holds the raw response and covariates. :func:`prepare`
turns it into a :class:`FitFrame`: the working design the estimators consume,
with groupable columns centered when an intercept is requested and the
ungrouped columns recorded as fixed singleton groups.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or degenerate input data."""


@dataclass(frozen=True)
class Dataset:
    y: np.ndarray
    X: np.ndarray
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError("X must be a 2-d array")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if y.shape[0] < 3:
            raise DataError(f"need at least 3 observations, got {y.shape[0]}")
        if X.shape[1] < 1:
            raise DataError("need at least one covariate")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("y and X must be finite (no NaN/Inf)")
        names = tuple(self.column_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} column names for {X.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        y.setflags(write=False)
        X = np.array(X, order="F")
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DataError(f"column not found: {name!r}") from None


def load_csv(path, response: str, features: Sequence[str] | None = None) -> Dataset:
    """Read a comma-separated file with a header row.

    All non-response columns become covariates (in header order) unless
    `features` is given. Row numbers in error messages count data rows from 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [r for r in reader if r]

    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise DataError(f"duplicate column(s) in header: {', '.join(dupes)}")
    if response not in header:
        raise DataError(f"column not found: {response!r}")
    if features is None:
        features = [h for h in header if h != response]
    else:
        features = list(features)
        for name in features:
            if name not in header:
                raise DataError(f"column not found: {name!r}")
        if len(set(features)) != len(features):
            raise DataError("duplicate feature names requested")
        if response in features:
            raise DataError(f"response {response!r} also listed as a feature")

    wanted = [response, *features]
    idx = [header.index(c) for c in wanted]
    values = np.empty((len(rows), len(wanted)))
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"row {i}: expected {len(header)} fields, found {len(row)}")
        for out_col, (name, col) in enumerate(zip(wanted, idx)):
            cell = row[col].strip()
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise DataError(f"row {i}, column {name}: cannot parse {cell!r} as a finite number")
            values[i - 1, out_col] = v
    if len(rows) < 3:
        raise DataError(f"need at least 3 observations, got {len(rows)}")
    return Dataset(y=values[:, 0], X=values[:, 1:], column_names=tuple(features))


def write_csv(dataset: Dataset, path, response: str = "y") -> None:
    """Write `dataset` in the format :func:`load_csv` reads (17 significant digits)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([response, *dataset.column_names])
        for yi, xi in zip(dataset.y, dataset.X):
            w.writerow([repr(float(yi)), *(repr(float(v)) for v in xi)])


@dataclass(frozen=True)
class FitFrame:
    """Working design for estimation.

    When `intercept` is true both X and y are centered by their sample means
    (so the intercept is an implicit fixed singleton orthogonal to every
    other column) and the intercept is recovered post-fit as
    ``y_mean - column_means @ beta``. Without an intercept the data are
    used as given; the caller is declaring them pre-centered.
    """

    dataset: Dataset
    centered: bool
    column_means: np.ndarray
    intercept: bool
    ungrouped_columns: frozenset[int]
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    y_mean: float = 0.0

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def p(self) -> int:
        return self.dataset.p

    @property
    def fixed_mask(self) -> np.ndarray:
        mask = np.zeros(self.p, dtype=bool)
        mask[list(self.ungrouped_columns)] = True
        return mask

    @property
    def groupable(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed_mask)

    @property
    def column_sq_norms(self) -> np.ndarray:
        return np.einsum("ij,ij->j", self.X, self.X)


def prepare(dataset: Dataset, intercept: bool = True, ungrouped: Iterable[int] = ()) -> FitFrame:
    """Center (if an intercept is requested) and record fixed singleton columns.

    `ungrouped` holds 0-based column indices that keep their own coefficient
    and are never reassigned between groups.
    """
    ungrouped = frozenset(int(j) for j in ungrouped)
    bad = [j for j in ungrouped if not 0 <= j < dataset.p]
    if bad:
        raise DataError(f"ungrouped column index out of range: {sorted(bad)}")

    X = np.array(dataset.X, dtype=float, order="F")
    y = np.array(dataset.y, dtype=float)
    if intercept:
        means = X.mean(axis=0)
        y_mean = float(y.mean())
        X -= means
        y -= y_mean
    else:
        means = np.zeros(dataset.p)
        y_mean = 0.0

    # constant columns: zero spread around the column's own mean
    spread = np.ptp(X, axis=0)
    scale = np.maximum(np.abs(X).max(axis=0), 1.0)
    for j in range(dataset.p):
        if spread[j] <= 1e-12 * scale[j]:
            if intercept or j not in ungrouped:
                raise DataError(f"zero-variance column: {dataset.column_names[j]}")
    for arr in (X, y, means):
        arr.setflags(write=False)
    return FitFrame(
        dataset=dataset,
        centered=bool(intercept),
        column_means=means,
        intercept=bool(intercept),
        ungrouped_columns=ungrouped,
        X=X,
        y=y,
        y_mean=y_mean,
    )
