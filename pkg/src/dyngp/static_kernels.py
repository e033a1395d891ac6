"""Stationary kernels and mean functions for static (non-time) GP layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DomainError, ShapeMismatchError

__all__ = [
    "Matern32Params",
    "MeanFunction",
    "matern32",
    "kernel_cross",
    "mean_eval",
    "matern_cross_nodes",
]

SQRT3 = np.sqrt(3.0)


@dataclass
class Matern32Params:
    """Anisotropic Matern-3/2 hyperparameters: one lengthscale per input
    dimension plus a scalar variance."""

    lengthscales: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        self.scale = float(self.scale)
        if np.any(self.lengthscales <= 0):
            raise DomainError("lengthscales must be positive")
        if self.scale <= 0:
            raise DomainError("scale must be positive")

    @property
    def input_dim(self):
        return self.lengthscales.shape[0]


@dataclass
class MeanFunction:
    """Zero, constant, or affine mean. ``weights`` applies only to linear."""

    kind: str = "zero"
    value: float = 0.0
    weights: np.ndarray | None = None
    bias: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "linear"):
            raise DomainError(f"unknown mean kind {self.kind!r}")
        if self.kind == "linear":
            if self.weights is None:
                raise DomainError("linear mean requires weights")
            self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))


def _gamma(x, xp, params):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != xp.shape or x.shape[-1] != params.input_dim:
        raise ShapeMismatchError(
            f"points of dim {x.shape}/{xp.shape} vs {params.input_dim} lengthscales"
        )
    return np.sqrt(np.sum(((x - xp) / params.lengthscales) ** 2, axis=-1))


def matern32(x, xp, params):
    """scale * (1 + sqrt(3) gamma) exp(-sqrt(3) gamma) with anisotropic gamma."""
    g = _gamma(x, xp, params)
    return float(params.scale * (1.0 + SQRT3 * g) * np.exp(-SQRT3 * g))


def kernel_cross(X, Xp, params):
    """Cross-covariance matrix; entry (i, j) is matern32(X[i], Xp[j])."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xp = np.atleast_2d(np.asarray(Xp, dtype=float))
    if X.shape[1] != params.input_dim or Xp.shape[1] != params.input_dim:
        raise ShapeMismatchError(
            f"column counts {X.shape[1]}/{Xp.shape[1]} vs {params.input_dim} lengthscales"
        )
    a = X / params.lengthscales
    b = Xp / params.lengthscales
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    g = np.sqrt(np.maximum(sq, 0.0))
    return params.scale * (1.0 + SQRT3 * g) * np.exp(-SQRT3 * g)


def mean_eval(mean, X):
    """Evaluate a mean function on the rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if mean.kind == "zero":
        return np.zeros(n)
    if mean.kind == "constant":
        return np.full(n, float(mean.value))
    if X.shape[1] != mean.weights.shape[0]:
        raise ShapeMismatchError(
            f"linear mean expects {mean.weights.shape[0]} columns, got {X.shape[1]}"
        )
    return X @ mean.weights + mean.bias


def matern_cross_nodes(x, z, lengthscales, scale):
    """Differentiable Matern-3/2 cross-kernel.

    ``x`` is an (n, d) tensor or array, ``z`` an (m, d) tensor,
    ``lengthscales`` a (d,) tensor and ``scale`` a scalar tensor. Returns an
    (n, m) tensor.
    """
    tape = z.tape
    x = x if isinstance(x, ad.Tensor) else tape.constant(np.atleast_2d(x))
    n, m = x.shape[0], z.shape[0]
    a = ad.div(x, lengthscales)
    b = ad.div(z, lengthscales)
    a2 = ad.reshape(ad.tensor_sum(a * a, axis=1), (n, 1))
    b2 = ad.tensor_sum(b * b, axis=1)
    sq = a2 + b2 - 2.0 * ad.matmul(a, ad.transpose(b))
    g = ad.sqrt(ad.clamp_min(sq, 0.0))
    r = SQRT3 * g
    return scale * (1.0 + r) * ad.exp(-r)
