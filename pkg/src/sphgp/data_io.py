"""Dataset ingestion, standardization, sphere projection, splits, minibatches.

Raw rows are standardized per column (statistics fit on the training split
only), extended with a constant bias coordinate, and divided by their norm,
which lands every input on the unit sphere in one extra dimension. The
pre-projection norm is kept alongside each point.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .harmonics import SpherePoint


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Schema:
    """Column roles for a CSV file: one target, ordered feature list, task."""

    target: str
    features: tuple[str, ...]
    task: str

    def __post_init__(self):
        if self.task not in ("regression", "binary"):
            raise DataError(f"task must be regression or binary, got {self.task!r}")
        if not self.features:
            raise DataError("schema needs at least one feature column")
        if self.target in self.features:
            raise DataError("target column cannot also be a feature")


def parse_schema(text: str) -> Schema:
    entries = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"schema line is not key=value: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = value
    missing = {"target", "features", "task"} - entries.keys()
    if missing:
        raise DataError(f"schema missing keys: {sorted(missing)}")
    features = tuple(c.strip() for c in entries["features"].split(",") if c.strip())
    return Schema(target=entries["target"], features=features, task=entries["task"])


def load_schema(path) -> Schema:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_schema(fh.read())


def serialize_schema(schema: Schema) -> str:
    return (
        f"target={schema.target}\n"
        f"features={','.join(schema.features)}\n"
        f"task={schema.task}\n"
    )


@dataclass(frozen=True)
class Dataset:
    """Parsed rows in file order plus the rejected-row count."""

    inputs: np.ndarray  # (N, d_raw)
    targets: np.ndarray  # (N,)
    task: str
    dropped_rows: int = 0

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.size:
            raise DataError("inputs and targets disagree in length")
        if self.inputs.shape[0] == 0:
            raise DataError("dataset is empty")

    @property
    def num_rows(self) -> int:
        return self.inputs.shape[0]

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.inputs).tobytes())
        digest.update(np.ascontiguousarray(self.targets).tobytes())
        return digest.hexdigest()


def _parse_value(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite")
    return value


def load_csv(path, schema: Schema, max_bad_fraction: float = 0.1) -> Dataset:
    """Typed CSV parse (RFC-4180 quoting, UTF-8, header row required).

    Rows with missing or non-finite values are dropped and counted; the load
    aborts if more than ``max_bad_fraction`` of the data rows are rejected.
    """
    rows = []
    targets = []
    dropped = 0
    total = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (header row required)") from None
        header = [h.strip() for h in header]
        try:
            feature_idx = [header.index(c) for c in schema.features]
            target_idx = header.index(schema.target)
        except ValueError as exc:
            raise DataError(f"{path}: missing column: {exc}") from None
        width = len(header)
        for record in reader:
            if not record:
                continue
            total += 1
            if len(record) != width:
                dropped += 1
                continue
            try:
                x = [_parse_value(record[i]) for i in feature_idx]
                t = _parse_value(record[target_idx])
            except ValueError:
                dropped += 1
                continue
            if schema.task == "binary" and t not in (0.0, 1.0):
                dropped += 1
                continue
            rows.append(x)
            targets.append(t)
    if total == 0:
        raise DataError(f"{path}: no data rows")
    if dropped > max_bad_fraction * total:
        raise DataError(
            f"{path}: {dropped}/{total} rows rejected, above the "
            f"{max_bad_fraction:.0%} limit"
        )
    return Dataset(
        inputs=np.asarray(rows, dtype=np.float64),
        targets=np.asarray(targets, dtype=np.float64),
        task=schema.task,
        dropped_rows=dropped,
    )


# ---------------------------------------------------------------------------
# standardization and splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, x):
        return (x - self.mean) / self.std

    def invert(self, x):
        return x * self.std + self.mean


def fit_scaler(values: np.ndarray) -> Scaler:
    mean = np.mean(values, axis=0)
    std = np.std(values, axis=0)
    # constant columns carry no signal; keep them finite
    std = np.where(std < 1e-12, 1.0, std)
    return Scaler(mean=mean, std=std)


@dataclass(frozen=True)
class SplitData:
    """One side of a train/test split, sharing the train-fitted scalers."""

    inputs: np.ndarray
    targets: np.ndarray
    task: str
    input_scaler: Scaler
    target_scaler: Scaler | None

    @property
    def num_rows(self) -> int:
        return self.inputs.shape[0]

    def standardized_inputs(self) -> np.ndarray:
        return self.input_scaler.transform(self.inputs)

    def standardized_targets(self) -> np.ndarray:
        if self.target_scaler is None:
            return self.targets
        return self.target_scaler.transform(self.targets)


def split(dataset: Dataset, test_fraction: float, seed: int):
    """Deterministic permutation split; scalers are fit on train only."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = dataset.num_rows
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise DataError(f"split of {n} rows at {test_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    input_scaler = fit_scaler(dataset.inputs[train_idx])
    target_scaler = (
        fit_scaler(dataset.targets[train_idx]) if dataset.task == "regression" else None
    )
    def side(idx):
        return SplitData(
            inputs=dataset.inputs[idx],
            targets=dataset.targets[idx],
            task=dataset.task,
            input_scaler=input_scaler,
            target_scaler=target_scaler,
        )
    return side(train_idx), side(test_idx)


# ---------------------------------------------------------------------------
# sphere projection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereBatch:
    """Row-stacked unit vectors plus their pre-projection norms."""

    coords: np.ndarray  # (N, d)
    norms: np.ndarray  # (N,)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __getitem__(self, i) -> SpherePoint:
        return SpherePoint(coords=self.coords[i], stored_norm=float(self.norms[i]))

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


def project_to_sphere(inputs, bias: float) -> SphereBatch:
    """Append the bias coordinate and normalize each row onto the sphere.

    Expects standardized raw inputs, never already-projected points; the
    ambient dimension grows by one and can never be degenerate since the
    bias keeps every row away from the origin.
    """
    if isinstance(inputs, SphereBatch):
        raise TypeError("inputs are already projected; refusing to project twice")
    if not bias > 0:
        raise ValueError(f"bias must be positive, got {bias}")
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    ext = np.concatenate([X, np.full((X.shape[0], 1), float(bias))], axis=1)
    norms = np.linalg.norm(ext, axis=1)
    return SphereBatch(coords=ext / norms[:, None], norms=norms)


def minibatches(n: int, batch_size: int, epoch_seed: int):
    """Yield index blocks of a fresh seeded permutation; last block may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = np.random.default_rng(epoch_seed).permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]
