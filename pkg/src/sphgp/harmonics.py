"""Spherical-harmonic feature bases built from fundamental point sets.

A frequency-``ell`` feature block is constructed from ``m`` unit directions
``V`` on the sphere: the raw features are the scaled Gegenbauer columns
``a_i(x) = ((ell+alpha)/alpha) * C_ell(v_i . x)`` (each a genuine degree-ell
harmonic), and the block is orthonormalized by the inverse Cholesky factor of
their Gram matrix ``A = ((ell+alpha)/alpha) * C_ell(V V^T)``. With a full set
(``m`` equal to the number of independent harmonics) the block spans all of
frequency ``ell``; with fewer directions it spans an ``m``-dimensional
orthonormal subspace, which is what makes high frequency cutoffs affordable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from . import backend
from .special_math import (
    clamp_inner_product,
    gegenbauer_at_one,
    gegenbauer_derivative,
    num_harmonics,
)

log = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-12
COND_LIMIT = 1e8
JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


@dataclass(frozen=True)
class SpherePoint:
    """Unit vector plus the norm its pre-projection input had."""

    coords: np.ndarray
    stored_norm: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=np.float64))
        n = float(np.linalg.norm(self.coords))
        if abs(n - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"coords must have unit norm, got {n!r}")
        if not self.stored_norm > 0:
            raise ValueError("stored_norm must be positive")

    @property
    def dim(self) -> int:
        return self.coords.size


def alpha_for_dim(dim: int) -> float:
    if dim < 3:
        raise ValueError(f"dimension must be >= 3, got {dim}")
    return (dim - 2) / 2.0


def addition_scale(ell: int, dim: int) -> float:
    """(ell + alpha) / alpha, the addition-theorem prefactor."""
    a = alpha_for_dim(dim)
    return (ell + a) / a


def fundamental_gram(directions: np.ndarray, ell: int, dim: int) -> np.ndarray:
    """Gram matrix of the raw frequency-ell features at the given directions."""
    t = clamp_inner_product(directions @ directions.T, tol=np.inf)
    return addition_scale(ell, dim) * backend.gegenbauer_last(alpha_for_dim(dim), ell, t)


@dataclass(frozen=True)
class FundamentalSet:
    """Directions for one frequency plus the Cholesky factor of their Gram."""

    frequency: int
    directions: np.ndarray  # (m, d), unit rows
    gram_chol: np.ndarray  # (m, m), lower triangular
    cond: float
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @property
    def num_phases(self) -> int:
        return self.directions.shape[0]

    @property
    def is_full(self) -> bool:
        return self.num_phases == num_harmonics(self.frequency, self.dim)


def _chol_with_jitter(gram: np.ndarray):
    """Cholesky with an escalating diagonal jitter; returns (L, jitter used)."""
    m = gram.shape[0]
    scale = float(np.trace(gram)) / m
    for level in (0.0,) + JITTER_LADDER:
        try:
            L = np.linalg.cholesky(gram + (level * scale) * np.eye(m))
            return L, level * scale
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        "Gram matrix is rank deficient even at maximum jitter; "
        "phase directions have collapsed onto each other"
    )


def _condition_number(gram: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0:
        return np.inf
    return float(eig[-1] / eig[0])


def _repel_budget(m: int) -> int:
    if m <= 64:
        return 200
    if m <= 256:
        return 120
    return 60


def _repel_directions(V: np.ndarray, ell: int, dim: int, iters: int) -> np.ndarray:
    """Spread directions by descending the off-diagonal Gram energy.

    The energy is sum over pairs of (C_ell(v_i . v_j) / C_ell(1))^2, i.e. it
    pushes the normalized Gram of the raw features toward the identity. This
    is frequency aware: for even ell an antipodal pair is just as singular as
    a coincident one, and both are penalized.
    """
    alpha = alpha_for_dim(dim)
    c_one = gegenbauer_at_one(alpha, ell)

    def energy_grad(M):
        t = np.clip(M @ M.T, -1.0, 1.0)
        c = backend.gegenbauer_last(alpha, ell, t) / c_one
        cp = gegenbauer_derivative(alpha, ell, t) / c_one
        np.fill_diagonal(c, 0.0)
        e = 0.5 * float(np.sum(c * c))
        return e, (c * cp) @ M

    energy, grad = energy_grad(V)
    step = 0.1
    for _ in range(iters):
        tangent = grad - np.sum(grad * V, axis=1, keepdims=True) * V
        trial = V - step * tangent
        trial /= np.linalg.norm(trial, axis=1, keepdims=True)
        e_trial, g_trial = energy_grad(trial)
        if e_trial < energy:
            V, energy, grad = trial, e_trial, g_trial
            step *= 1.1
        else:
            step *= 0.5
            if step < 1e-7:
                break
    return V


def build_fundamental_set(
    ell: int,
    dim: int,
    num_phases: int,
    seed: int = 0,
    max_restarts: int = 4,
    cond_limit: float = COND_LIMIT,
) -> FundamentalSet:
    """Pick ``num_phases`` well-separated directions for frequency ``ell``.

    Starts from a seeded random draw, runs the repulsion above, and accepts
    the candidate only if the Gram Cholesky succeeds with condition number
    below ``cond_limit``. Retries with fresh seeds a bounded number of times.
    """
    if ell < 1:
        raise ValueError("frequency must be >= 1 (0 is the constant feature)")
    full = num_harmonics(ell, dim)
    if not 1 <= num_phases <= full:
        raise ValueError(
            f"num_phases must be in [1, N({ell},{dim})={full}], got {num_phases}"
        )
    best_cond = np.inf
    for attempt in range(max_restarts):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(seed, dim, ell, num_phases, attempt))
        )
        V = rng.standard_normal((num_phases, dim))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        candidates = [V]
        if num_phases > 1:
            candidates.insert(0, _repel_directions(V, ell, dim, _repel_budget(num_phases)))
        scored = []
        for cand in candidates:
            gram = fundamental_gram(cand, ell, dim)
            cond = _condition_number(gram)
            best_cond = min(best_cond, cond)
            scored.append((cond, cand, gram))
        cond, cand, gram = min(scored, key=lambda s: s[0])
        if cond < cond_limit:
            try:
                chol = np.linalg.cholesky(gram)
            except np.linalg.LinAlgError:
                continue
            return FundamentalSet(
                frequency=ell, directions=cand, gram_chol=chol, cond=cond
            )
    raise RuntimeError(
        f"could not build a fundamental set for ell={ell}, d={dim}, m={num_phases} "
        f"after {max_restarts} restarts; best condition number {best_cond:.3e}"
    )


def reorthogonalize(fset: FundamentalSet) -> FundamentalSet:
    """Re-normalize possibly perturbed directions and refresh the Cholesky.

    If the Gram factorization fails the smallest jitter from a fixed ladder
    (relative to trace/m) is added and recorded on the returned set.
    """
    V = fset.directions / np.linalg.norm(fset.directions, axis=1, keepdims=True)
    gram = fundamental_gram(V, fset.frequency, fset.dim)
    chol, jitter = _chol_with_jitter(gram)
    if jitter > 0:
        log.warning(
            "frequency %d: Gram needed jitter %.3e during re-orthogonalization",
            fset.frequency,
            jitter,
        )
    return FundamentalSet(
        frequency=fset.frequency,
        directions=V,
        gram_chol=chol,
        cond=_condition_number(gram),
        jitter=jitter,
    )


@dataclass(frozen=True)
class HarmonicBasis:
    """Constant feature plus per-frequency fundamental sets up to a cutoff."""

    dim: int
    max_frequency: int
    sets: tuple[FundamentalSet, ...]

    def __post_init__(self):
        seen = set()
        for fs in self.sets:
            if fs.dim != self.dim:
                raise ValueError("fundamental set dimension mismatch")
            if not 1 <= fs.frequency <= self.max_frequency:
                raise ValueError("fundamental set frequency out of range")
            if fs.frequency in seen:
                raise ValueError("duplicate frequency in basis")
            seen.add(fs.frequency)

    @property
    def num_features(self) -> int:
        return 1 + sum(fs.num_phases for fs in self.sets)

    def feature_frequencies(self) -> np.ndarray:
        """Frequency of every feature column, length num_features."""
        freqs = [0]
        for fs in self.sets:
            freqs.extend([fs.frequency] * fs.num_phases)
        return np.asarray(freqs, dtype=np.int64)

    def blocks(self):
        """Yield (frequency, column slice, set-or-None) in feature order."""
        yield 0, slice(0, 1), None
        col = 1
        for fs in self.sets:
            yield fs.frequency, slice(col, col + fs.num_phases), fs
            col += fs.num_phases

    def set_for(self, ell: int) -> FundamentalSet:
        for fs in self.sets:
            if fs.frequency == ell:
                return fs
        raise KeyError(f"no fundamental set at frequency {ell}")

    def with_set(self, new_set: FundamentalSet) -> "HarmonicBasis":
        sets = tuple(
            new_set if fs.frequency == new_set.frequency else fs for fs in self.sets
        )
        return replace(self, sets=sets)


def build_basis(
    dim: int,
    max_frequency: int,
    phase_limit: int | None = None,
    seed: int = 0,
    counts: dict[int, int] | None = None,
) -> HarmonicBasis:
    """Build a basis for frequencies 0..max_frequency.

    ``phase_limit`` caps the per-frequency phase count (None keeps every
    frequency full); ``counts`` overrides the count per frequency and may
    assign 0 to skip a frequency entirely.
    """
    if max_frequency < 0:
        raise ValueError("max_frequency must be >= 0")
    sets = []
    for ell in range(1, max_frequency + 1):
        full = num_harmonics(ell, dim)
        if counts is not None and ell in counts:
            m = counts[ell]
        elif phase_limit is not None:
            m = min(phase_limit, full)
        else:
            m = full
        if m == 0:
            continue
        sets.append(build_fundamental_set(ell, dim, m, seed=seed))
    return HarmonicBasis(dim=dim, max_frequency=max_frequency, sets=tuple(sets))


def _as_matrix(x, dim: int):
    if isinstance(x, SpherePoint):
        coords = x.coords[None, :]
        single = True
    else:
        coords = np.asarray(x, dtype=np.float64)
        single = coords.ndim == 1
        coords = np.atleast_2d(coords)
    if coords.shape[1] != dim:
        raise ValueError(f"points have dimension {coords.shape[1]}, basis expects {dim}")
    return coords, single


def features(basis: HarmonicBasis, x, overrides: dict | None = None) -> np.ndarray:
    """Evaluate the orthonormalized feature vector(s) at point(s) ``x``.

    For a full phase set the features reproduce the addition theorem:
    sum_i phi_i(x) phi_i(y) = ((ell+alpha)/alpha) * C_ell(x . y).

    ``overrides`` maps a frequency to a (directions, gram_chol) pair and is
    used while phases are being trained.
    """
    X, single = _as_matrix(x, basis.dim)
    alpha = alpha_for_dim(basis.dim)
    out = np.empty((X.shape[0], basis.num_features), dtype=np.float64)
    for ell, cols, fs in basis.blocks():
        if ell == 0:
            out[:, 0] = 1.0
            continue
        if overrides is not None and ell in overrides:
            V, L = overrides[ell]
        else:
            V, L = fs.directions, fs.gram_chol
        t = np.clip(X @ V.T, -1.0, 1.0)
        raw = addition_scale(ell, basis.dim) * backend.gegenbauer_last(alpha, ell, t)
        out[:, cols] = solve_triangular(L, raw.T, lower=True, check_finite=False).T
    return out[0] if single else out


def monte_carlo_gram(
    basis: HarmonicBasis, n_samples: int, seed: int = 0, chunk: int = 65536
) -> np.ndarray:
    """Empirical E[phi(x) phi(x)^T] under uniform x; test/verification aid."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    m = basis.num_features
    acc = np.zeros((m, m))
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        X = rng.standard_normal((n, basis.dim))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        F = features(basis, X)
        acc += F.T @ F
        done += n
    return acc / n_samples


# --- flat array serialization (used by the model checkpoint) ---------------

BASIS_FORMAT_VERSION = 1


def basis_to_arrays(basis: HarmonicBasis) -> dict[str, np.ndarray]:
    arrays = {
        "basis_version": np.asarray(BASIS_FORMAT_VERSION, dtype=np.int64),
        "basis_dim": np.asarray(basis.dim, dtype=np.int64),
        "basis_max_frequency": np.asarray(basis.max_frequency, dtype=np.int64),
        "basis_frequencies": np.asarray(
            [fs.frequency for fs in basis.sets], dtype=np.int64
        ),
    }
    for fs in basis.sets:
        arrays[f"basis_V_{fs.frequency}"] = np.ascontiguousarray(
            fs.directions, dtype=np.float64
        )
    return arrays


def basis_from_arrays(arrays) -> HarmonicBasis:
    version = int(arrays["basis_version"])
    if version != BASIS_FORMAT_VERSION:
        raise ValueError(f"unsupported basis format version {version}")
    dim = int(arrays["basis_dim"])
    max_frequency = int(arrays["basis_max_frequency"])
    sets = []
    for ell in np.asarray(arrays["basis_frequencies"], dtype=np.int64):
        ell = int(ell)
        V = np.asarray(arrays[f"basis_V_{ell}"], dtype=np.float64)
        gram = fundamental_gram(V, ell, dim)
        chol, jitter = _chol_with_jitter(gram)
        sets.append(
            FundamentalSet(
                frequency=ell,
                directions=V,
                gram_chol=chol,
                cond=_condition_number(gram),
                jitter=jitter,
            )
        )
    return HarmonicBasis(dim=dim, max_frequency=max_frequency, sets=tuple(sets))
