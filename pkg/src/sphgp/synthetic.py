"""Small deterministic dataset generators for smoke runs and self-tests."""

from __future__ import annotations

import csv

import numpy as np


def write_regression_csv(path, n: int, d_raw: int = 3, seed: int = 0, noise: float = 0.1):
    """Rows from a smooth nonlinear function of a few random projections."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d_raw))
    w1 = rng.standard_normal(d_raw) / np.sqrt(d_raw)
    w2 = rng.standard_normal(d_raw) / np.sqrt(d_raw)
    f = np.sin(2.0 * X @ w1) + 0.5 * (X @ w2) ** 2
    y = f + noise * rng.standard_normal(n)
    _write(path, X, y, target="y")
    return path


def write_classification_csv(path, n: int, d_raw: int = 8, seed: int = 0):
    """Binary rows with a probit ground truth over nonlinear projections.

    Eight feature columns by default, mirroring the shape of kinematic
    detector summaries used in large collider classification benchmarks.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d_raw))
    u1 = rng.standard_normal(d_raw) / np.sqrt(d_raw)
    u2 = rng.standard_normal(d_raw) / np.sqrt(d_raw)
    score = 1.4 * (X @ u1) + 1.0 * (X @ u2) ** 2 - 0.8
    from scipy.special import ndtr

    y = (rng.random(n) < ndtr(score)).astype(np.float64)
    _write(path, X, y, target="label")
    return path


def _write(path, X, y, target: str):
    n, d = X.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j + 1}" for j in range(d)] + [target])
        for i in range(n):
            writer.writerow([f"{v:.10g}" for v in X[i]] + [f"{y[i]:.10g}"])


def regression_schema(d_raw: int = 3) -> str:
    cols = ",".join(f"x{j + 1}" for j in range(d_raw))
    return f"target=y\nfeatures={cols}\ntask=regression\n"


def classification_schema(d_raw: int = 8) -> str:
    cols = ",".join(f"x{j + 1}" for j in range(d_raw))
    return f"target=label\nfeatures={cols}\ntask=binary\n"
