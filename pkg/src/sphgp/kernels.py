"""Zonal kernels on the sphere, defined by shape functions or by spectra.

A zonal kernel is ``k(x, y) = variance * kappa(x . y)`` for a shape function
``kappa`` on [-1, 1] normalized so ``kappa(1) = 1``. Its eigenvalues over the
spherical harmonics come from a one-dimensional weighted integral of the
shape against Gegenbauer polynomials; conversely a spectrum defines a kernel
through the truncated polynomial expansion

    k(x, y) = variance * sum_l ((l+alpha)/alpha) * lambda_l * C_l(x . y).

The ``poly_decay`` spectrum models the eigenvalues directly as ``l**-beta``
with a trainable ``beta``; smaller ``beta`` behaves like a deeper composed
kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import backend
from .special_math import (
    clamp_inner_product,
    funk_hecke_constant,
    gauss_legendre,
    gegenbauer_at_one,
    gegenbauer_table,
    num_harmonics,
)

EIG_CLAMP = 1e-10  # quadrature results in [-EIG_CLAMP, 0] clamp to 0; below aborts


# ---------------------------------------------------------------------------
# shape functions
# ---------------------------------------------------------------------------

def _clamped(t):
    return clamp_inner_product(t)


class ReluShape:
    """Angular factor of the first-order arc-cosine kernel, scaled to 1 at t=1."""

    name = "relu_arccos"

    def __call__(self, t):
        t = _clamped(t)
        return (t * (np.pi - np.arccos(t)) + np.sqrt(np.maximum(0.0, 1.0 - t * t))) / np.pi


def relu_shape(t):
    return ReluShape()(t)


def relu_derivative_shape(t):
    """d/dt of the relu shape: (pi - arccos t) / pi (the order-0 arc-cosine shape)."""
    t = _clamped(t)
    return (np.pi - np.arccos(t)) / np.pi


class ComposedShape:
    """depth-fold self-composition of a normalized base shape."""

    def __init__(self, base, depth: int):
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        self.base = base
        self.depth = depth
        self.name = f"composed({getattr(base, 'name', 'shape')},{depth})"

    def __call__(self, t):
        v = np.asarray(t, dtype=np.float64)
        for _ in range(self.depth):
            v = self.base(v)
        return v


def compose_shape(base, depth: int) -> ComposedShape:
    return ComposedShape(base, depth)


class NtkShape:
    """Depth-L tangent-kernel shape for ReLU networks, scaled to 1 at t=1.

    Recursion over layers with s0 = theta0 = t:
        s_l     = kappa(s_{l-1})
        theta_l = s_l + theta_{l-1} * kappa_dot(s_{l-1})
    where kappa is the relu shape and kappa_dot its derivative. theta_L(1)
    equals L+1, which is the normalizer.
    """

    def __init__(self, depth: int):
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        self.depth = depth
        self.name = f"ntk_relu({depth})"
        self._relu = ReluShape()

    def __call__(self, t):
        s = np.asarray(_clamped(t), dtype=np.float64)
        theta = s.copy()
        for _ in range(self.depth):
            kd = relu_derivative_shape(s)
            s = self._relu(s)
            theta = s + theta * kd
        return theta / (self.depth + 1.0)


def ntk_relu_shape(depth: int) -> NtkShape:
    return NtkShape(depth)


class TabulatedShape:
    """Shape given by linear interpolation of sampled values on [-1, 1]."""

    name = "tabulated"

    def __init__(self, grid: np.ndarray, values: np.ndarray):
        grid = np.asarray(grid, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if grid.ndim != 1 or grid.shape != values.shape:
            raise ValueError("grid and values must be matching 1-D arrays")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        self.grid = grid
        self.values = values

    def __call__(self, t):
        return np.interp(_clamped(t), self.grid, self.values)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Spectrum:
    """Per-frequency eigenvalues of a zonal kernel, plus the radial variance.

    ``eigenvalues[l]`` is the unit-variance eigenvalue of frequency l; the
    kernel scale enters through ``variance`` only. For a ``poly_decay``
    source ``beta`` is set and eigenvalues are l**-beta for l >= 1 with a
    configurable constant term ``lambda0``.
    """

    dim: int
    eigenvalues: np.ndarray
    source: str
    variance: float = 1.0
    beta: float | None = None
    lambda0: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "eigenvalues", np.asarray(self.eigenvalues, dtype=np.float64)
        )
        if self.dim < 3:
            raise ValueError(f"dimension must be >= 3, got {self.dim}")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        lam = self.eigenvalues
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a non-empty 1-D array")
        if np.any(lam < 0):
            raise ValueError("eigenvalues must be non-negative")
        if not np.any(lam > 0):
            raise ValueError("at least one eigenvalue must be positive")
        if self.beta is not None and lam.size > 2 and np.any(np.diff(lam[1:]) >= 0):
            raise ValueError("poly-decay eigenvalues must be strictly decreasing")

    @property
    def max_frequency(self) -> int:
        return self.eigenvalues.size - 1

    @property
    def alpha(self) -> float:
        return (self.dim - 2) / 2.0


def poly_decay_spectrum(
    beta: float,
    dim: int,
    max_frequency: int,
    lambda0: float = 1.0,
    variance: float = 1.0,
) -> Spectrum:
    """Spectrum lambda_l = l**-beta for l >= 1; the l=0 term is ``lambda0``."""
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    ells = np.arange(max_frequency + 1, dtype=np.float64)
    lam = np.empty(max_frequency + 1)
    lam[0] = lambda0
    lam[1:] = ells[1:] ** (-beta)
    return Spectrum(
        dim=dim,
        eigenvalues=lam,
        source=f"poly_decay(beta={beta:g})",
        variance=variance,
        beta=float(beta),
        lambda0=float(lambda0),
    )


def poly_decay_beta_gradient(spec: Spectrum) -> np.ndarray:
    """d(eigenvalues)/d(beta); zero for the constant term."""
    if spec.beta is None:
        raise ValueError("spectrum has no beta parameter")
    ells = np.arange(spec.max_frequency + 1, dtype=np.float64)
    grad = np.zeros_like(ells)
    grad[1:] = -np.log(ells[1:]) * ells[1:] ** (-spec.beta)
    return grad


def funk_hecke_spectrum(
    shape,
    dim: int,
    max_frequency: int,
    quad_order: int | None = None,
    variance: float = 1.0,
) -> Spectrum:
    """Eigenvalues of a shape function by weighted Gauss-Legendre quadrature.

    The integral over t in [-1, 1] with weight (1 - t^2)^((d-3)/2) is taken
    after the substitution t = cos(theta), where both the weight (sin^{d-2})
    and the arc-cosine family of shapes are analytic, so the rule converges
    spectrally for every integer dimension.
    """
    if dim < 3:
        raise ValueError(f"dimension must be >= 3, got {dim}")
    if max_frequency < 0:
        raise ValueError("max_frequency must be >= 0")
    if quad_order is None:
        quad_order = max(64, max_frequency + 32)
    if quad_order < max_frequency + 16:
        raise ValueError(
            f"quad_order must be >= max_frequency + 16 = {max_frequency + 16}"
        )
    rule = gauss_legendre(quad_order)
    theta = (rule.nodes + 1.0) * (np.pi / 2.0)
    w = rule.weights * (np.pi / 2.0) * np.sin(theta) ** (dim - 2)
    tq = np.cos(theta)
    alpha = (dim - 2) / 2.0
    ctab = gegenbauer_table(alpha, max_frequency, tq)
    kvals = np.asarray(shape(tq), dtype=np.float64)
    integrals = ctab @ (w * kvals)
    c_at_one = np.array(
        [gegenbauer_at_one(alpha, ell) for ell in range(max_frequency + 1)]
    )
    lam = funk_hecke_constant(dim) * integrals / c_at_one
    if np.any(lam < -EIG_CLAMP):
        worst = float(np.min(lam))
        raise ValueError(
            f"eigenvalue {worst:.3e} below -{EIG_CLAMP:.0e}: shape function is not "
            "positive definite on the sphere (or the quadrature failed)"
        )
    lam = np.maximum(lam, 0.0)
    name = getattr(shape, "name", getattr(shape, "__name__", "shape"))
    return Spectrum(
        dim=dim, eigenvalues=lam, source=f"funk_hecke({name})", variance=variance
    )


def spectrum_with(
    spec: Spectrum, beta: float | None = None, variance: float | None = None
) -> Spectrum:
    """Copy of the spectrum with updated hyper-parameters.

    Changing ``beta`` recomputes poly-decay eigenvalues; for quadrature-based
    spectra only the variance may change.
    """
    out = spec
    if beta is not None and spec.beta is not None and beta != spec.beta:
        out = poly_decay_spectrum(
            beta,
            spec.dim,
            spec.max_frequency,
            lambda0=spec.lambda0,
            variance=out.variance,
        )
    if variance is not None:
        out = replace(out, variance=float(variance))
    return out


# ---------------------------------------------------------------------------
# truncated Mercer evaluation
# ---------------------------------------------------------------------------

def _expansion_coeffs(spec: Spectrum) -> np.ndarray:
    ells = np.arange(spec.max_frequency + 1, dtype=np.float64)
    return spec.variance * spec.eigenvalues * (ells + spec.alpha) / spec.alpha


def _coords(x, dim):
    coords = x.coords if hasattr(x, "coords") else np.asarray(x, dtype=np.float64)
    if coords.shape[-1] != dim:
        raise ValueError(f"point dimension {coords.shape[-1]} != spectrum dimension {dim}")
    return coords


def mercer_gram(spec: Spectrum, X, Y=None) -> np.ndarray:
    """Kernel matrix of the truncated expansion between row-stacked points."""
    X = np.atleast_2d(_coords(X, spec.dim))
    Y = X if Y is None else np.atleast_2d(_coords(Y, spec.dim))
    t = np.clip(X @ Y.T, -1.0, 1.0)
    return backend.zonal_sum(_expansion_coeffs(spec), spec.alpha, t)


def mercer_eval(spec: Spectrum, x, y) -> float:
    """Kernel value between two points on the sphere."""
    cx = _coords(x, spec.dim)
    cy = _coords(y, spec.dim)
    t = float(np.clip(np.dot(cx, cy), -1.0, 1.0))
    return float(backend.zonal_sum(_expansion_coeffs(spec), spec.alpha, np.array([t]))[0])


def mercer_diag_value(spec: Spectrum) -> float:
    """k(x, x), identical for every unit vector x: variance * sum_l N(l,d) lambda_l."""
    counts = np.array(
        [num_harmonics(ell, spec.dim) for ell in range(spec.max_frequency + 1)],
        dtype=np.float64,
    )
    return float(spec.variance * np.dot(counts, spec.eigenvalues))


def zonal_from_spectrum(spec: Spectrum):
    """The unit-variance shape sum_l ((l+alpha)/alpha) lambda_l C_l(t) as a callable."""
    coeffs = _expansion_coeffs(spec) / spec.variance
    alpha = spec.alpha

    def shape(t):
        return backend.zonal_sum(coeffs, alpha, np.clip(t, -1.0, 1.0))

    shape.name = f"mercer({spec.source})"
    return shape


def export_spectrum(spec: Spectrum, path) -> None:
    """Write (frequency, eigenvalue relative to lambda_1) rows as CSV."""
    lam = spec.eigenvalues
    if lam.size < 2 or lam[1] <= 0:
        raise ValueError("export requires a positive eigenvalue at frequency 1")
    lines = ["frequency,relative_eigenvalue"]
    for ell in range(1, lam.size):
        lines.append(f"{ell},{lam[ell] / lam[1]:.17g}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
