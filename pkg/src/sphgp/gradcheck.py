"""Central-difference verification of the analytic ELBO gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vargp as V


@dataclass(frozen=True)
class GradCheckRow:
    parameter: str
    analytic: float
    finite_diff: float
    rel_err: float
    ok: bool


def check_gradients(
    model,
    state,
    X,
    y,
    likelihood,
    n_total: int,
    h: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    corrupt: str | None = None,
) -> list[GradCheckRow]:
    """Compare every gradient coordinate against central finite differences.

    A coordinate passes when |analytic - fd| <= max(rtol * max(|a|, |fd|), atol).
    ``corrupt`` names a parameter block whose analytic gradient is deliberately
    damaged, which lets callers verify the check itself can fail.
    """
    _, grads = V.elbo_gradients(model, state, X, y, likelihood, n_total)
    garr = V._grad_arrays(grads)
    if corrupt is not None:
        if corrupt not in garr:
            raise KeyError(f"unknown parameter block {corrupt!r}")
        garr[corrupt] = garr[corrupt] * 1.1 + 0.05
    params = V._state_params(state)

    def value_at(p):
        return V.elbo(model, V._state_from_params(p, state), X, y, likelihood, n_total)

    rows = []
    for key in garr:
        grad_flat = np.atleast_1d(np.asarray(garr[key], dtype=np.float64)).ravel()
        base = np.asarray(params[key], dtype=np.float64)
        for i in range(grad_flat.size):
            plus = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
            plus[key].reshape(-1)[i] += h
            minus = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
            minus[key].reshape(-1)[i] -= h
            fd = (value_at(plus) - value_at(minus)) / (2.0 * h)
            a = float(grad_flat[i])
            denom = max(abs(a), abs(fd))
            err = abs(a - fd)
            rel = err / denom if denom > 0 else 0.0
            ok = err <= max(rtol * denom, atol)
            name = key if base.ndim == 0 else f"{key}[{i}]"
            rows.append(GradCheckRow(name, a, fd, rel, ok))
    return rows


def worst_rows(rows: list[GradCheckRow]) -> dict[str, GradCheckRow]:
    """Worst row per parameter block, keyed by block name."""
    worst: dict[str, GradCheckRow] = {}
    for row in rows:
        block = row.parameter.split("[")[0]
        if block not in worst or row.rel_err > worst[block].rel_err:
            worst[block] = row
    return worst
