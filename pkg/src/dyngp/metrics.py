"""Point and probabilistic forecast scores (RMSE, MAE, sample-based CRPS)."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError

__all__ = ["rmse", "mae", "crps_from_samples"]


def _paired(y, yhat):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    yhat = np.atleast_1d(np.asarray(yhat, dtype=float))
    if y.shape != yhat.shape:
        raise ShapeMismatchError(f"length mismatch: {y.shape} vs {yhat.shape}")
    return y, yhat


def rmse(y, yhat):
    y, yhat = _paired(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mae(y, yhat):
    y, yhat = _paired(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def crps_from_samples(samples, y):
    """Energy-form CRPS estimator averaged over points.

    ``samples`` is (S,) for a single observation or (S, n) for n of them.
    Uses mean_s |x_s - y| - 1/2 mean_{s,s'} |x_s - x_s'| with the biased
    1/S^2 pairwise term, computed in O(S log S) via the sorted identity
    mean|x - x'| = (2/S^2) sum_k (2k + 1 - S) x_(k).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if samples.shape[1] != y.shape[0]:
        raise ShapeMismatchError(
            f"{samples.shape[1]} forecast columns vs {y.shape[0]} observations"
        )
    S = samples.shape[0]
    term1 = np.mean(np.abs(samples - y[None, :]), axis=0)
    xs = np.sort(samples, axis=0)
    k = np.arange(S)[:, None]
    pairwise = (2.0 / (S * S)) * np.sum((2 * k + 1 - S) * xs, axis=0)
    return float(np.mean(term1 - 0.5 * pairwise))
