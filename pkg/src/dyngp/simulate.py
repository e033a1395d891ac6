"""Exact-discretization simulation of stochastic LTI systems and synthetic
Wiener dataset generation.

The one-step process-noise covariance is taken from the stationarity
identity Q_d = S_inf - Abar S_inf Abar^T, so a stationary start stays
stationary and empirical lag covariances converge to the model kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import lti
from .errors import DomainError, ShapeMismatchError

__all__ = [
    "SimConfig",
    "GeneratedDataset",
    "simulate_lti",
    "generate_wiener_dataset",
    "positive_part",
]


@dataclass
class SimConfig:
    """Synthetic-dataset knobs. ``system=None`` draws the random
    diagonal-plus-rank-one generator from the seed."""

    system: object = None
    delta: float = 0.01
    horizon: int = 2500
    noise_std_fraction: float = 0.1
    seed: int = 0
    train_boundary: int = 1500
    nonlinearity: str = "positive_part"  # none | positive_part | quadratic
    n_states: int = 5

    def __post_init__(self):
        if self.delta <= 0:
            raise DomainError("delta must be positive")
        if self.horizon < 1:
            raise DomainError("horizon must be at least 1")
        if self.noise_std_fraction < 0:
            raise DomainError("noise fraction must be non-negative")
        if not 0 < self.train_boundary <= self.horizon:
            raise DomainError("train boundary must lie within the horizon")
        if self.nonlinearity not in ("none", "positive_part", "quadratic"):
            raise DomainError(f"unknown nonlinearity {self.nonlinearity!r}")


@dataclass
class GeneratedDataset:
    """Uniform-grid dataset with a noisy training segment and a noise-free
    test segment after the boundary index."""

    times: np.ndarray
    U: np.ndarray
    y_train: np.ndarray
    y_test: np.ndarray
    boundary: int
    noise_std: float
    seed: int

    @property
    def y_full(self):
        return np.concatenate([self.y_train, self.y_test])

    @property
    def delta(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 1.0


def positive_part(x):
    """max(x, 0), elementwise."""
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def _psd_factor(q):
    """Factor of a PSD matrix that may be singular (eigenvalue clipping)."""
    w, v = np.linalg.eigh(0.5 * (q + q.T))
    return v * np.sqrt(np.clip(w, 0.0, None))


def _simulate_dense(dense, U, delta, with_process_noise, rng, stationary_start):
    dense.check_stable()
    n = U.shape[0]
    ns = dense.n_states
    Abar = lti.expm_dense(dense.A, delta)
    Bbar = (Abar - np.eye(ns)) @ np.linalg.solve(dense.A, dense.B)
    z = np.zeros(ns)
    noise = np.zeros((n, ns))
    noise_on = with_process_noise is not False
    if noise_on or stationary_start:
        S_inf = lti.lyapunov_dense(dense.A, dense.L @ dense.L.T)
        if stationary_start:
            z = _psd_factor(S_inf) @ rng.standard_normal(ns)
        if noise_on:
            Qd = S_inf - Abar @ S_inf @ Abar.T
            mask = (
                np.ones(n, dtype=bool)
                if with_process_noise is True
                else np.asarray(with_process_noise, dtype=bool)
            )
            noise = rng.standard_normal((n, ns)) @ _psd_factor(Qd).T
            noise[~mask] = 0.0
    states = np.empty((n, ns))
    states[0] = z
    for k in range(1, n):
        z = Abar @ z + Bbar @ U[k] + noise[k]
        states[k] = z
    outputs = states @ dense.C + U @ dense.D
    return states, outputs


def _simulate_complex(sys, U, delta, with_process_noise, rng, stationary_start):
    """Per-block complex recursions via lfilter; blocks are independently
    driven, matching the additive kernel composition."""
    sys.check_stable()
    n = U.shape[0]
    nb = sys.num_blocks
    outputs = U @ sys.D
    states = np.empty((n, nb), dtype=complex)
    mask = None
    if with_process_noise is not False and with_process_noise is not True:
        mask = np.asarray(with_process_noise, dtype=bool)
    for j in range(nb):
        lam = sys.lam[j]
        block_real = lti.realify(
            lti.ComplexDiagonalLTI(
                lam=[lam], B=np.zeros((1, 1)), L=sys.L[None, j], c=[sys.c[j]],
                D=np.zeros(1), delta=delta,
            )
        )
        abar = np.exp(lam * delta)
        phi = (abar - 1.0) / lam
        drive = phi * (U @ sys.B[j])
        drive = drive.astype(complex)
        need_cov = (with_process_noise is not False) or stationary_start
        if need_cov:
            S_inf = lti.lyapunov_dense(block_real.A, block_real.L @ block_real.L.T)
        zeta0 = 0.0 + 0.0j
        if stationary_start:
            w0 = _psd_factor(S_inf) @ rng.standard_normal(2)
            zeta0 = (w0[0] - 1j * w0[1]) / np.sqrt(2.0)
        if with_process_noise is not False:
            Ab2 = lti.expm_dense(block_real.A, delta)
            Qd = S_inf - Ab2 @ S_inf @ Ab2.T
            w = rng.standard_normal((n, 2)) @ _psd_factor(Qd).T
            wc = (w[:, 0] - 1j * w[:, 1]) / np.sqrt(2.0)
            if mask is not None:
                wc[~mask] = 0.0
            drive = drive + wc
        drive[0] = zeta0
        zeta = lfilter([1.0], [1.0, -abar], drive)
        states[:, j] = zeta
        outputs = outputs + 2.0 * np.real(sys.c[j] * zeta)
    return states, outputs


def simulate_lti(sys, U, delta=None, with_process_noise=True, seed=0, stationary_start=False):
    """Simulate the exact discrete recursion of a stochastic LTI system.

    ``with_process_noise`` may be a bool or a per-step boolean mask (noise
    switched off where False). Returns (states, outputs); states are complex
    per block for complex-diagonal systems, real otherwise.
    """
    rng = np.random.default_rng(seed)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if isinstance(sys, lti.ComplexDiagonalLTI):
        if U.shape[1] != sys.n_u:
            raise ShapeMismatchError(f"U has {U.shape[1]} columns, system expects {sys.n_u}")
        return _simulate_complex(sys, U, delta or sys.delta, with_process_noise, rng, stationary_start)
    if U.shape[1] != sys.B.shape[1]:
        raise ShapeMismatchError(f"U has {U.shape[1]} columns, system expects {sys.B.shape[1]}")
    if delta is None:
        raise DomainError("delta is required for dense systems")
    return _simulate_dense(sys, U, delta, with_process_noise, rng, stationary_start)


def draw_rank_one_system(rng, n_states=5, n_inputs=2, n_noise=1):
    """Random stable generator: A = -diag(U[0,1]) - v v^T with v ~ U[0,1]^n;
    C, B ~ N(0, 1), L ~ N(0, 0.1)."""
    lam = rng.uniform(0.0, 1.0, n_states)
    v = rng.uniform(0.0, 1.0, n_states)
    A = -np.diag(lam) - np.outer(v, v)
    return lti.DenseLTI(
        A=A,
        B=rng.standard_normal((n_states, n_inputs)),
        L=np.sqrt(0.1) * rng.standard_normal((n_states, n_noise)),
        C=rng.standard_normal(n_states),
        D=np.zeros(n_inputs),
    )


def generate_wiener_dataset(cfg):
    """Simulated two-input Wiener system dataset.

    Inputs are u(t) = [sin(3 pi t), sin(5 pi t)] on t = k delta starting at
    zero. Process noise is on before the boundary and off after it;
    measurement noise (fraction of the nonlinear output's training std) is
    added to the training outputs only. Fixed seeds give identical bytes.
    """
    rng = np.random.default_rng(cfg.seed)
    system = cfg.system
    if system is None:
        system = draw_rank_one_system(rng, n_states=cfg.n_states)
    n, b = cfg.horizon, cfg.train_boundary
    times = np.arange(n) * cfg.delta
    U = np.column_stack([np.sin(3 * np.pi * times), np.sin(5 * np.pi * times)])
    noise_mask = np.arange(n) < b
    _, y_lin = simulate_lti(
        system, U, delta=cfg.delta, with_process_noise=noise_mask,
        seed=rng.integers(2**32),
    )
    if cfg.nonlinearity == "positive_part":
        y_sig = positive_part(y_lin)
    elif cfg.nonlinearity == "quadratic":
        y_sig = y_lin**2
    else:
        y_sig = y_lin
    noise_std = cfg.noise_std_fraction * float(np.std(y_sig[:b]))
    y_train = y_sig[:b] + noise_std * rng.standard_normal(b)
    y_test = y_sig[b:].copy()
    return GeneratedDataset(
        times=times, U=U, y_train=y_train, y_test=y_test,
        boundary=b, noise_std=noise_std, seed=cfg.seed,
    )
