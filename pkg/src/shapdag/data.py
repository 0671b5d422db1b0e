"""Tabular data container, CSV round-tripping, standardization and row subsampling."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Base class for dataset construction and ingestion problems."""


class CsvFormatError(DataError):
    pass


class DegenerateColumnError(DataError):
    def __init__(self, column: str):
        super().__init__(f"column {column!r} has zero variance")
        self.column = column


@dataclass(frozen=True)
class Dataset:
    """An m x p matrix of finite observations with named columns.

    ``means`` and ``stds`` are set only when the data has been standardized and
    record the transform that was applied.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    standardized: bool = False
    means: np.ndarray | None = field(default=None, repr=False)
    stds: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        cols = tuple(str(c) for c in self.columns)
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {vals.shape}")
        m, p = vals.shape
        if m < 2 or p < 2:
            raise DataError(f"need at least 2 rows and 2 columns, got {m}x{p}")
        if len(cols) != p:
            raise DataError(f"{len(cols)} column names for {p} columns")
        if len(set(cols)) != len(cols):
            dupes = sorted({c for c in cols if cols.count(c) > 1})
            raise DataError(f"duplicate column names: {dupes}")
        if not np.all(np.isfinite(vals)):
            raise DataError("dataset contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise KeyError(f"unknown column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def features_for(self, target: str) -> tuple[list[str], np.ndarray, np.ndarray]:
        """Split into (feature names, feature matrix, target vector) for one target."""
        j = self.index(target)
        names = [c for c in self.columns if c != target]
        X = np.delete(self.values, j, axis=1)
        return names, X, self.values[:, j].copy()

    def take(self, rows: np.ndarray) -> "Dataset":
        # a row subset is no longer exactly centred, so the flag is dropped
        return Dataset(self.columns, self.values[rows])


def save_csv(d: Dataset, path: str | os.PathLike) -> None:
    # repr() of a Python float is the shortest string that round-trips exactly
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(d.columns)
        for row in d.values:
            w.writerow([repr(float(v)) for v in row])


def load_csv(path: str | os.PathLike) -> Dataset:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty file, a header row is required")
    header = [h.strip() for h in rows[0]]
    seen = set()
    for h in header:
        if h in seen:
            raise CsvFormatError(f"{path}: duplicate header name {h!r}")
        seen.add(h)
    body = []
    for r, raw in enumerate(rows[1:], start=1):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != len(header):
            raise CsvFormatError(
                f"{path}: row {r} has {len(raw)} cells, header has {len(header)}"
            )
        parsed = []
        for name, cell in zip(header, raw):
            try:
                v = float(cell)
            except ValueError:
                raise CsvFormatError(
                    f"{path}: row {r}, column {name!r}: cannot parse {cell!r} as a number"
                ) from None
            if not math.isfinite(v):
                raise CsvFormatError(f"{path}: row {r}, column {name!r}: non-finite value")
            parsed.append(v)
        body.append(parsed)
    if not body:
        raise CsvFormatError(f"{path}: no data rows")
    return Dataset(tuple(header), np.array(body, dtype=float))


def standardize(d: Dataset) -> Dataset:
    """Return a copy with every column shifted to mean 0 and scaled to unit variance."""
    vals = d.values
    means = vals.mean(axis=0)
    stds = vals.std(axis=0)
    for name, s, col in zip(d.columns, stds, vals.T):
        # relative test so that large-offset constant columns are still caught
        if s <= 1e-12 * max(1.0, float(np.abs(col).max())):
            raise DegenerateColumnError(name)
    z = (vals - means) / stds
    # a second pass removes the rounding residue of the first
    z = (z - z.mean(axis=0)) / z.std(axis=0)
    return Dataset(d.columns, z, True, means, stds)


@dataclass(frozen=True)
class BootstrapPlan:
    iterations: int
    miss_probability: float
    fraction: float

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.miss_probability < 1:
            raise ValueError("miss_probability must lie in (0, 1)")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        floor = minimal_fraction(self.iterations, self.miss_probability)
        if self.fraction < floor * (1 - 1e-12):
            raise ValueError(
                f"fraction {self.fraction} is below the coverage floor {floor:.6g}"
            )


def minimal_fraction(T: int, q: float) -> float:
    return 1.0 - q ** (1.0 / T)


def bootstrap_plan(T: int, q: float) -> BootstrapPlan:
    """Smallest per-round sampling fraction c such that a given row is missed by
    all T rounds with probability at most q."""
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q!r}")
    c = min(1.0, max(minimal_fraction(int(T), q), np.nextafter(0.0, 1.0)))
    return BootstrapPlan(int(T), float(q), float(c))


def sample_size(m: int, fraction: float) -> int:
    # guard against 0.5 * 100 = 50.00000000001 style rounding pushing ceil up
    return int(math.ceil(fraction * m - 1e-9))


def sample_rows(d: Dataset, fraction: float, rng) -> Dataset:
    """Draw ceil(fraction * m) distinct rows uniformly at random."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    k = sample_size(d.n_rows, fraction)
    if k < 2:
        raise ValueError(
            f"fraction {fraction} of {d.n_rows} rows gives {k} rows, at least 2 are needed"
        )
    rng = np.random.default_rng(rng)
    idx = rng.choice(d.n_rows, size=k, replace=False)
    return d.take(idx)


def from_columns(columns: Sequence[str], values) -> Dataset:
    return Dataset(tuple(columns), np.asarray(values, dtype=float))
