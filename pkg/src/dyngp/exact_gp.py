"""Exact single-layer GP regression: log marginal likelihood, the
mean-adjusted predictive posterior, and first-order MAP fitting.

Two model flavors share the interface: a dynamic model whose kernel/mean come
from a complex-diagonal stochastic LTI system on a uniform time grid, and a
static model with an anisotropic Matern-3/2 kernel. Hyperparameters live as
raw unconstrained arrays (softplus for positives), so MAP fitting is plain
gradient ascent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import lti, static_kernels as sk
from .errors import NotPositiveDefiniteError, ShapeMismatchError, TrainingError
from .optim import Adam, AdamConfig

__all__ = [
    "TimeGridData",
    "PointData",
    "PosteriorGaussian",
    "DynamicGPModel",
    "StaticGPModel",
    "log_marginal_likelihood",
    "posterior_predict",
    "fit_map",
    "FitConfig",
]


@dataclass
class TimeGridData:
    """Training data on a uniform grid: inputs for the whole grid, outputs
    for the leading ``len(y)`` grid points."""

    U: np.ndarray
    y: np.ndarray
    delta: float

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        if len(self.y) > self.U.shape[0]:
            raise ShapeMismatchError("more outputs than grid points with inputs")

    @property
    def n_train(self):
        return len(self.y)


@dataclass
class PointData:
    """Plain regression data for static kernels."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        if self.X.shape[0] != len(self.y):
            raise ShapeMismatchError("X and y row counts differ")


@dataclass
class PosteriorGaussian:
    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray | None = None


def _chol_jittered_np(m, schedule=ad.DEFAULT_JITTER_SCHEDULE):
    """Numpy twin of the tape-based jittered Cholesky (prediction path)."""
    scale = float(np.mean(np.diag(m)))
    if scale <= 0:
        scale = 1.0
    for rel in (0.0,) + tuple(schedule):
        eps = rel * scale
        try:
            return np.linalg.cholesky(m + eps * np.eye(m.shape[0])), eps
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError("covariance not positive definite after jitter schedule")


def _softplus_np(x):
    return np.logaddexp(0.0, x)


class DynamicGPModel:
    """Single dynamic GP layer: LTI kernel/mean with Gaussian observation noise."""

    kind = "dynamic"

    def __init__(self, num_blocks, n_u, n_l=1, delta=0.01, seed=0, values=None):
        self.delta = float(delta)
        if values is not None:
            self.values = {k: np.asarray(v, dtype=float).copy() for k, v in values.items()}
            return
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(num_blocks)
        self.values = {
            "a": rng.uniform(0.1, 2.0, num_blocks),
            "b": rng.uniform(0.0, 0.5 * np.pi / self.delta, num_blocks),
            "B_re": scale * rng.standard_normal((num_blocks, n_u)),
            "B_im": scale * rng.standard_normal((num_blocks, n_u)),
            "L_re": scale * rng.standard_normal((num_blocks, n_l)),
            "L_im": scale * rng.standard_normal((num_blocks, n_l)),
            "c_re": scale * rng.standard_normal(num_blocks),
            "c_im": scale * rng.standard_normal(num_blocks),
            "D": np.zeros(n_u),
            "raw_noise": np.array(lti.softplus_inv(1e-2)),
        }

    def init_noise_from(self, y):
        var = max(float(np.var(y)), 1e-12)
        self.values["raw_noise"] = np.array(lti.softplus_inv(1e-2 * var))

    def system(self):
        return lti.system_from_values(self.values, self.delta)

    def noise_variance(self):
        return float(_softplus_np(self.values["raw_noise"]))

    def copy(self):
        return DynamicGPModel(0, 0, delta=self.delta, values=self.values)

    def lml_nodes(self, tape, data):
        leaves = {k: tape.leaf(v, name=k) for k, v in self.values.items()}
        n = data.n_train
        lags = lti.lag_kernel_nodes(leaves, np.arange(n) * self.delta)
        idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
        K = lags[idx]
        noise = ad.softplus(leaves["raw_noise"])
        Ky = K + noise * np.eye(n)
        mean = lti.mean_nodes(leaves, data.U[:n], self.delta)
        resid = tape.constant(data.y) - mean
        return _gaussian_lml(tape, Ky, resid, n), leaves


class StaticGPModel:
    """Single Matern-3/2 GP over real covariates with a fixed mean function."""

    kind = "static"

    def __init__(self, input_dim, mean=None, seed=0, values=None):
        self.mean = mean or sk.MeanFunction(kind="zero")
        if values is not None:
            self.values = {k: np.asarray(v, dtype=float).copy() for k, v in values.items()}
            return
        self.values = {
            "raw_ell": np.full(input_dim, lti.softplus_inv(1.0)),
            "raw_scale": np.array(lti.softplus_inv(1.0)),
            "raw_noise": np.array(lti.softplus_inv(1e-2)),
        }

    def init_noise_from(self, y):
        var = max(float(np.var(y)), 1e-12)
        self.values["raw_noise"] = np.array(lti.softplus_inv(1e-2 * var))

    def kernel_params(self):
        return sk.Matern32Params(
            lengthscales=_softplus_np(self.values["raw_ell"]),
            scale=float(_softplus_np(self.values["raw_scale"])),
        )

    def noise_variance(self):
        return float(_softplus_np(self.values["raw_noise"]))

    def copy(self):
        return StaticGPModel(0, mean=self.mean, values=self.values)

    def lml_nodes(self, tape, data):
        leaves = {k: tape.leaf(v, name=k) for k, v in self.values.items()}
        n = len(data.y)
        ell = ad.softplus(leaves["raw_ell"])
        scale = ad.softplus(leaves["raw_scale"])
        K = sk.matern_cross_nodes(data.X, tape.constant(data.X), ell, scale)
        noise = ad.softplus(leaves["raw_noise"])
        Ky = K + noise * np.eye(n)
        resid = tape.constant(data.y - sk.mean_eval(self.mean, data.X))
        return _gaussian_lml(tape, Ky, resid, n), leaves


def _gaussian_lml(tape, Ky, resid, n):
    factor, _ = ad.cholesky_jittered(Ky)
    diag = factor[(np.arange(n), np.arange(n))]
    logdet = 2.0 * ad.tensor_sum(ad.log(diag))
    z = ad.triangular_solve(factor, resid)
    quad = ad.tensor_sum(z * z)
    return -0.5 * (n * np.log(2.0 * np.pi)) - 0.5 * logdet - 0.5 * quad


def log_marginal_likelihood(model, data):
    """log N(y; m, K + noise I) as a differentiable scalar tensor."""
    tape = ad.Tape()
    out, _ = model.lml_nodes(tape, data)
    return out


def _prior_terms(model, tape, leaves, priors):
    if not priors:
        return None
    total = None
    for name, fn in priors.items():
        term = fn(leaves[name])
        total = term if total is None else total + term
    return total


def posterior_predict(model, data, test, include_noise=False):
    """Mean-adjusted predictive posterior (Gaussian) at the test locations.

    For dynamic models ``test`` is an integer array of grid indices (inputs
    must cover the grid up to the largest one); for static models it is an
    (m, d) array of covariates.
    """
    noise = model.noise_variance()
    if model.kind == "dynamic":
        test = np.asarray(test, dtype=int)
        sys = model.system()
        n = data.n_train
        n_max = max(n, int(test.max()) + 1 if test.size else n)
        if data.U.shape[0] < n_max:
            raise ShapeMismatchError("inputs do not cover the requested horizon")
        lags = lti.kernel_lags(sys, n_max)
        mean_full = lti.mean_trajectory(sys, data.U[:n_max])
        K_train = lags[np.abs(np.subtract.outer(np.arange(n), np.arange(n)))]
        K_cross = lags[np.abs(np.subtract.outer(np.arange(n), test))]
        prior_test_mean = mean_full[test]
        prior_test_var = np.full(len(test), lags[0])
        resid = data.y - mean_full[:n]
    else:
        test = np.atleast_2d(np.asarray(test, dtype=float))
        params = model.kernel_params()
        K_train = sk.kernel_cross(data.X, data.X, params)
        K_cross = sk.kernel_cross(data.X, test, params)
        prior_test_mean = sk.mean_eval(model.mean, test)
        prior_test_var = np.full(test.shape[0], params.scale)
        resid = data.y - sk.mean_eval(model.mean, data.X)

    factor, _ = _chol_jittered_np(K_train + noise * np.eye(len(resid)))
    alpha = np.linalg.solve(factor.T, np.linalg.solve(factor, resid))
    mean = prior_test_mean + K_cross.T @ alpha
    v = np.linalg.solve(factor, K_cross)
    variance = prior_test_var - np.sum(v * v, axis=0)
    variance = np.maximum(variance, 0.0)
    if model.kind == "dynamic":
        K_test = lags[np.abs(np.subtract.outer(test, test))]
    else:
        K_test = sk.kernel_cross(test, test, model.kernel_params())
    covariance = K_test - v.T @ v
    if include_noise:
        variance = variance + noise
        covariance = covariance + noise * np.eye(len(variance))
    return PosteriorGaussian(mean=mean, variance=variance, covariance=covariance)


@dataclass
class FitConfig:
    iterations: int = 2000
    step: float = 1e-2
    clip_norm: float | None = 100.0
    init_noise_from_data: bool = True


def fit_map(model, data, priors=None, cfg=None):
    """Gradient-ascent MAP fit of log-ML plus log-priors.

    Returns ``(fitted_model, trace)`` where the fitted model carries the
    best-so-far parameters and ``trace`` is the per-iteration objective.
    """
    cfg = cfg or FitConfig()
    model = model.copy()
    if cfg.init_noise_from_data:
        model.init_noise_from(data.y)
    opt = Adam(model.values, AdamConfig(step=cfg.step, clip_norm=cfg.clip_norm))
    trace = []
    best_obj = -np.inf
    best_values = {k: v.copy() for k, v in model.values.items()}

    for it in range(cfg.iterations):
        tape = ad.Tape()
        lml, leaves = model.lml_nodes(tape, data)
        prior = _prior_terms(model, tape, leaves, priors)
        objective = lml if prior is None else lml + prior
        value = objective.item()
        if not np.isfinite(value):
            if it == 0:
                bad = [k for k, v in model.values.items() if not np.all(np.isfinite(v))]
                raise TrainingError(
                    f"objective non-finite at initialization (suspect parameters: {bad or 'none'})"
                )
            raise TrainingError(f"objective became non-finite at iteration {it}")
        trace.append(value)
        if value > best_obj:
            best_obj = value
            best_values = {k: v.copy() for k, v in model.values.items()}
        grads = ad.backward(tape, objective)
        opt.step({leaf.name: g for leaf, g in grads.items()})

    model.values = best_values
    return model, trace
