"""Dataset ingestion, feature construction, and standardization."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GridError, IngestionError, ShapeMismatchError

__all__ = [
    "TimeSeriesDataset",
    "StandardizeRecord",
    "load_csv",
    "save_csv",
    "fourier_features",
    "standardize",
    "from_generated",
]

GRID_RTOL = 1e-9


@dataclass
class TimeSeriesDataset:
    """Uniform-grid dataset with a train/test boundary index."""

    times: np.ndarray
    U: np.ndarray
    y: np.ndarray
    boundary: int

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        n = len(self.times)
        if self.U.shape[0] != n or len(self.y) != n:
            raise ShapeMismatchError("times, U, and y must have the same length")
        if not 0 < self.boundary <= n:
            raise ShapeMismatchError(f"boundary {self.boundary} outside [1, {n}]")
        _check_uniform(self.times)

    @property
    def n(self):
        return len(self.times)

    @property
    def n_train(self):
        return self.boundary

    @property
    def n_u(self):
        return self.U.shape[1]

    @property
    def delta(self):
        return float(self.times[1] - self.times[0]) if self.n > 1 else 1.0

    def train_slice(self):
        return slice(0, self.boundary)

    def test_slice(self):
        return slice(self.boundary, self.n)


def _check_uniform(times):
    if len(times) < 3:
        return
    steps = np.diff(times)
    delta = steps[0]
    if delta <= 0:
        raise GridError("time column must be strictly increasing", index=1)
    bad = np.nonzero(np.abs(steps - delta) > GRID_RTOL * abs(delta))[0]
    if bad.size:
        raise GridError(
            f"non-uniform grid: step {bad[0] + 1} is {steps[bad[0]]!r}, expected {delta!r}",
            index=int(bad[0] + 1),
        )


def from_generated(gen):
    """Adapt a simulator GeneratedDataset to the harness dataset type."""
    return TimeSeriesDataset(times=gen.times, U=gen.U, y=gen.y_full, boundary=gen.boundary)


def load_csv(path, schema, boundary=None):
    """Parse a comma-separated file into a dataset.

    ``schema`` maps roles to column names: {"time": ..., "inputs": [...],
    "output": ...}. Reports the first offending row/column on missing or
    unparseable values, and the first offending step on grid violations.
    ``boundary`` defaults to the full length (all training).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        wanted = [schema["time"], *schema["inputs"], schema["output"]]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise IngestionError(f"{path}: missing columns {missing}")
        cols = {c: header.index(c) for c in wanted}
        rows = []
        for r, row in enumerate(reader):
            parsed = []
            for c in wanted:
                cell = row[cols[c]].strip() if cols[c] < len(row) else ""
                if cell == "":
                    raise IngestionError(
                        f"{path}: missing value at row {r + 2}, column {c!r}",
                        row=r + 2,
                        column=c,
                    )
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise IngestionError(
                        f"{path}: unparseable value {cell!r} at row {r + 2}, column {c!r}",
                        row=r + 2,
                        column=c,
                    ) from None
            rows.append(parsed)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=float)
    if np.any(~np.isfinite(table)):
        r, c = np.argwhere(~np.isfinite(table))[0]
        raise IngestionError(
            f"{path}: non-finite value at row {int(r) + 2}, column {wanted[int(c)]!r}",
            row=int(r) + 2,
            column=wanted[int(c)],
        )
    times = table[:, 0]
    U = table[:, 1 : 1 + len(schema["inputs"])]
    y = table[:, -1]
    return TimeSeriesDataset(
        times=times, U=U, y=y, boundary=boundary if boundary is not None else len(times)
    )


def save_csv(path, dataset, input_names=None):
    """Write a dataset in the harness CSV format (header, '.' decimals)."""
    names = input_names or [f"u{i + 1}" for i in range(dataset.n_u)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", *names, "y"])
        for k in range(dataset.n):
            writer.writerow(
                [repr(float(dataset.times[k]))]
                + [repr(float(v)) for v in dataset.U[k]]
                + [repr(float(dataset.y[k]))]
            )


def fourier_features(n, delta, periods):
    """Harmonic input columns on the grid t = k delta, k = 0..n-1.

    ``periods`` is a list of (frequency, harmonic_count) pairs; each pair
    contributes [cos(2 pi t m), sin(2 pi t m), ..., cos(2 pi t k m),
    sin(2 pi t k m)] columns, cosine before sine.
    """
    t = np.arange(n) * float(delta)
    cols = []
    for freq, count in periods:
        if count < 1:
            raise ShapeMismatchError("harmonic count must be at least 1")
        for k in range(1, count + 1):
            phase = 2.0 * np.pi * t * k * freq
            cols.append(np.cos(phase))
            cols.append(np.sin(phase))
    return np.column_stack(cols)


@dataclass
class StandardizeRecord:
    """Training-split z-scoring transform with its inverse."""

    input_mean: np.ndarray
    input_std: np.ndarray
    output_mean: float
    output_std: float

    def apply_inputs(self, U):
        return (U - self.input_mean) / self.input_std

    def apply_outputs(self, y):
        return (y - self.output_mean) / self.output_std

    def invert_outputs(self, y):
        return y * self.output_std + self.output_mean

    def to_dict(self):
        return {
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "output_mean": self.output_mean,
            "output_std": self.output_std,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            input_mean=np.asarray(payload["input_mean"], dtype=float),
            input_std=np.asarray(payload["input_std"], dtype=float),
            output_mean=float(payload["output_mean"]),
            output_std=float(payload["output_std"]),
        )


def standardize(dataset):
    """Z-score inputs and outputs using training-split statistics only.

    Zero-variance input columns are left unchanged (with a warning) so
    indicator columns survive. Returns (standardized dataset, record).
    """
    tr = dataset.train_slice()
    in_mean = dataset.U[tr].mean(axis=0)
    in_std = dataset.U[tr].std(axis=0)
    flat = in_std < 1e-12
    if np.any(flat):
        warnings.warn(
            f"skipping standardization of zero-variance input columns {np.nonzero(flat)[0].tolist()}"
        )
        in_mean = np.where(flat, 0.0, in_mean)
        in_std = np.where(flat, 1.0, in_std)
    out_mean = float(dataset.y[tr].mean())
    out_std = float(dataset.y[tr].std())
    if out_std < 1e-12:
        warnings.warn("output has zero variance on the training split; leaving unscaled")
        out_mean, out_std = 0.0, 1.0
    record = StandardizeRecord(
        input_mean=in_mean, input_std=in_std, output_mean=out_mean, output_std=out_std
    )
    scaled = TimeSeriesDataset(
        times=dataset.times.copy(),
        U=record.apply_inputs(dataset.U),
        y=record.apply_outputs(dataset.y),
        boundary=dataset.boundary,
    )
    return scaled, record
