"""Stochastic LTI systems as Gaussian processes over a uniform time grid.

A complex-diagonal system is a sum of 2-state blocks with conjugate
eigenvalue pairs (lambda_j, conj(lambda_j)). Stability (Re lambda < 0) gives
a stationary output covariance with a closed form per block, and the
zero-order-hold mean is a one-dimensional complex linear recurrence per
block. This module provides:

* plain numpy evaluations (``kernel_value``, ``kernel_matrix``,
  ``mean_trajectory``) used for prediction and as fast paths;
* the equivalent dense real-form system (``realify``) together with dense
  Lyapunov / matrix-exponential oracles used to validate the closed forms;
* tape-based builders (``lag_kernel_nodes``, ``mean_nodes``) that express the
  same quantities as differentiable ops for training.

The real form uses C_r = [sqrt(2) Re c, sqrt(2) Im c]: with the similarity
transform J = [[1, 1], [i, -i]]/sqrt(2) this is the unique choice that keeps
the output law y = 2 Re(c zeta) + D u intact (verified against the complex
closed forms to machine precision).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.signal import lfilter

from . import autodiff as ad
from .errors import DomainError, ShapeMismatchError, SingularityError, StabilityError

__all__ = [
    "ComplexDiagonalLTI",
    "DenseLTI",
    "steady_state_block",
    "kernel_value",
    "kernel_lags",
    "kernel_matrix",
    "mean_trajectory",
    "realify",
    "lyapunov_dense",
    "expm_dense",
    "dense_kernel_lags",
    "dense_mean_trajectory",
    "matern32_state_space",
    "random_system",
    "lag_kernel_nodes",
    "mean_nodes",
    "params_from_system",
    "system_from_values",
    "softplus_inv",
]


@dataclass
class ComplexDiagonalLTI:
    """Block-diagonal stochastic LTI system with conjugate eigenvalue pairs.

    ``lam``, ``c`` have one complex entry per block; ``B`` is (blocks, n_u),
    ``L`` is (blocks, n_l), ``D`` is (n_u,). ``delta`` is the sampling time
    and ``m0`` the initial complex state mean per block (zero by default).
    """

    lam: np.ndarray
    B: np.ndarray
    L: np.ndarray
    c: np.ndarray
    D: np.ndarray
    delta: float
    m0: np.ndarray | None = None

    def __post_init__(self):
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=complex))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=complex))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=complex))
        self.L = np.atleast_2d(np.asarray(self.L, dtype=complex))
        self.D = np.atleast_1d(np.asarray(self.D, dtype=float))
        if self.m0 is None:
            self.m0 = np.zeros(self.num_blocks, dtype=complex)
        self.m0 = np.atleast_1d(np.asarray(self.m0, dtype=complex))
        nb = self.num_blocks
        if not (self.c.shape == (nb,) and self.B.shape[0] == nb
                and self.L.shape[0] == nb and self.m0.shape == (nb,)):
            raise ShapeMismatchError("inconsistent per-block shapes")
        if self.B.shape[1] != self.D.shape[0]:
            raise ShapeMismatchError(
                f"B has {self.B.shape[1]} input columns but D has {self.D.shape[0]}"
            )
        if not self.delta > 0:
            raise DomainError(f"sampling time must be positive, got {self.delta}")

    @property
    def num_blocks(self):
        return self.lam.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_l(self):
        return self.L.shape[1]

    def check_stable(self):
        if np.any(self.lam.real >= 0):
            worst = self.lam[np.argmax(self.lam.real)]
            raise StabilityError(f"eigenvalue {worst} has non-negative real part")


@dataclass
class DenseLTI:
    """Real state-space system dz = Az dt + Bu dt + L dbeta, y = Cz + Du."""

    A: np.ndarray
    B: np.ndarray
    L: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float))
        self.C = np.atleast_1d(np.asarray(self.C, dtype=float))
        self.D = np.atleast_1d(np.asarray(self.D, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ShapeMismatchError("A must be square")
        if self.B.shape[0] != n or self.L.shape[0] != n or self.C.shape != (n,):
            raise ShapeMismatchError("B/L/C dimensions inconsistent with A")

    @property
    def n_states(self):
        return self.A.shape[0]

    def check_stable(self):
        eig = np.linalg.eigvals(self.A)
        if np.any(eig.real >= 0):
            raise StabilityError(f"state matrix eigenvalue {eig[np.argmax(eig.real)]} is not strictly stable")


def steady_state_block(lam, L_row):
    """Stationary covariance of one conjugate block.

    Solves A S + S A^H + L_c L_c^H = 0 for A = diag(lam, conj(lam)) and
    L_c = [L; conj(L)] in closed form; the result is Hermitian with a real
    non-negative top-left entry.
    """
    lam = complex(lam)
    if lam.real >= 0:
        raise StabilityError(f"eigenvalue {lam} has non-negative real part")
    L_row = np.atleast_1d(np.asarray(L_row, dtype=complex))
    llh = float(np.real(L_row @ L_row.conj()))
    llt = L_row @ L_row
    two_alpha = lam + np.conj(lam)
    return -np.array(
        [
            [llh / two_alpha, llt / (2.0 * lam)],
            [np.conj(llt) / (2.0 * np.conj(lam)), llh / two_alpha],
        ],
        dtype=complex,
    )


def _block_kernel_coeffs(sys):
    """Per-block constants (g, w) with S_j(tau) = g_j Re(e^{lam tau}) ... see below.

    S_j(tau) = -(|c|^2 ||L||^2 / Re(lam)) Re(e^{lam tau})
               - Re((c^2 (L L^T) / lam) e^{lam tau})
    """
    llh = np.real(np.sum(sys.L * sys.L.conj(), axis=1))
    llt = np.sum(sys.L * sys.L, axis=1)
    g = -(np.abs(sys.c) ** 2) * llh / sys.lam.real
    w = -(sys.c**2) * llt / sys.lam
    return g, w


def kernel_value(sys, tau):
    """Stationary output covariance S(t, t + tau), summed over blocks."""
    sys.check_stable()
    tau = abs(float(tau))
    g, w = _block_kernel_coeffs(sys)
    p = np.exp(sys.lam * tau)
    total = np.sum(g * p.real) + np.sum(np.real(w * p))
    return float(total)


def kernel_lags(sys, n):
    """The n distinct kernel values S(0), S(delta), ..., S((n-1) delta)."""
    sys.check_stable()
    if n < 1:
        raise DomainError("grid length must be at least 1")
    taus = np.arange(n) * sys.delta
    g, w = _block_kernel_coeffs(sys)
    p = np.exp(np.outer(sys.lam, taus))
    return g @ p.real + np.real(w @ p)


def kernel_matrix(sys, n):
    """Toeplitz covariance matrix on the n-point grid (n distinct values)."""
    lags = kernel_lags(sys, n)
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return lags[idx]


def mean_trajectory(sys, U):
    """Zero-order-hold output mean on the grid of ``U``'s rows.

    Row k holds u(k delta); the state recursion is s_k = e^{lam delta} s_{k-1}
    + (e^{lam delta}-1)/lam * B u(k delta) for k >= 1 with s_0 = m0, and the
    output is 2 Re(c s_k) + D u(k delta).
    """
    if np.any(sys.lam == 0):
        raise SingularityError("zero eigenvalue: ZOH mean divides by lambda")
    sys.check_stable()
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[1] != sys.n_u:
        raise ShapeMismatchError(f"U has {U.shape[1]} columns, system expects {sys.n_u}")
    n = U.shape[0]
    out = U @ sys.D
    abar = np.exp(sys.lam * sys.delta)
    phi = (abar - 1.0) / sys.lam
    for j in range(sys.num_blocks):
        drive = phi[j] * (U @ sys.B[j])
        drive[0] = sys.m0[j]
        states = lfilter([1.0], [1.0, -abar[j]], drive)
        out = out + 2.0 * np.real(sys.c[j] * states)
    return out


def realify(sys):
    """Equivalent real-form dense system (2 states per block).

    Blocks are independently driven, so each block gets its own slice of
    noise columns; the additive kernel composition relies on this.
    """
    nb = sys.num_blocks
    n = 2 * nb
    nl = sys.n_l
    A = np.zeros((n, n))
    B = np.zeros((n, sys.n_u))
    L = np.zeros((n, nb * nl))
    C = np.zeros(n)
    r2 = np.sqrt(2.0)
    for j in range(nb):
        s = 2 * j
        lam = sys.lam[j]
        A[s : s + 2, s : s + 2] = [[lam.real, lam.imag], [-lam.imag, lam.real]]
        B[s] = r2 * sys.B[j].real
        B[s + 1] = -r2 * sys.B[j].imag
        L[s, j * nl : (j + 1) * nl] = r2 * sys.L[j].real
        L[s + 1, j * nl : (j + 1) * nl] = -r2 * sys.L[j].imag
        C[s] = r2 * sys.c[j].real
        C[s + 1] = r2 * sys.c[j].imag
    return DenseLTI(A=A, B=B, L=L, C=C, D=sys.D.copy())


def lyapunov_dense(A, Q):
    """Solve A S + S A^T + Q = 0 for Hurwitz A and symmetric PSD Q."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    eig = np.linalg.eigvals(A)
    if np.any(eig.real >= 0):
        raise StabilityError(f"eigenvalue {eig[np.argmax(eig.real)]} on or right of the imaginary axis")
    S = solve_continuous_lyapunov(A, -Q)
    return 0.5 * (S + S.T)


def expm_dense(A, t=1.0):
    """Matrix exponential e^{A t} by scaling-and-squaring with a diagonal
    Pade approximant (order 10, scaled norm <= 1/2)."""
    M = np.atleast_2d(np.asarray(A, dtype=float)) * float(t)
    if M.shape[0] != M.shape[1]:
        raise ShapeMismatchError("expm_dense: matrix must be square")
    norm = np.linalg.norm(M, 1)
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
        M = M / (2.0**squarings)
    q = 10
    coeff = np.empty(q + 1)
    coeff[0] = 1.0
    for j in range(1, q + 1):
        coeff[j] = coeff[j - 1] * (q + 1 - j) / (j * (2 * q + 1 - j))
    eye = np.eye(M.shape[0])
    power = eye
    num = coeff[0] * eye
    den = coeff[0] * eye
    sign = 1.0
    for j in range(1, q + 1):
        power = power @ M
        sign = -sign
        num = num + coeff[j] * power
        den = den + coeff[j] * sign * power
    F = np.linalg.solve(den, num)
    for _ in range(squarings):
        F = F @ F
    return F


def dense_kernel_lags(dense, taus):
    """Oracle: S(tau) = C e^{A tau} S_inf C^T from the dense real form."""
    dense.check_stable()
    S_inf = lyapunov_dense(dense.A, dense.L @ dense.L.T)
    out = np.empty(len(taus))
    for i, tau in enumerate(taus):
        out[i] = dense.C @ expm_dense(dense.A, tau) @ S_inf @ dense.C
    return out


def matern32_state_space(lengthscale, scale):
    """Two-state system whose stationary output covariance is
    sqrt(3) scale (1 + sqrt(3) tau / lengthscale) exp(-sqrt(3) tau / lengthscale)."""
    ell = float(lengthscale)
    sigma = np.sqrt(float(scale))
    A = np.array([[0.0, 1.0], [-3.0 / ell**2, -2.0 * np.sqrt(3.0) / ell]])
    L = sigma * np.array([[0.0], [np.sqrt(36.0 / ell**3)]])
    return DenseLTI(A=A, B=np.zeros((2, 1)), L=L, C=np.array([1.0, 0.0]), D=np.zeros(1))


def dense_mean_trajectory(dense, U, delta, z0=None):
    """Oracle: exact ZOH discretization z_{k} = Abar z_{k-1} + Bbar u_k."""
    dense.check_stable()
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n = U.shape[0]
    Abar = expm_dense(dense.A, delta)
    Bbar = (Abar - np.eye(dense.n_states)) @ np.linalg.solve(dense.A, dense.B)
    z = np.zeros(dense.n_states) if z0 is None else np.asarray(z0, dtype=float).copy()
    out = np.empty(n)
    out[0] = dense.C @ z + dense.D @ U[0]
    for k in range(1, n):
        z = Abar @ z + Bbar @ U[k]
        out[k] = dense.C @ z + dense.D @ U[k]
    return out


def random_system(rng, num_blocks=2, n_u=1, n_l=1, delta=0.05):
    """Random stable test system with O(1) kernel scale."""
    scale = 1.0 / np.sqrt(num_blocks)

    def crand(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    lam = -rng.uniform(0.2, 2.0, num_blocks) + 1j * rng.uniform(0.0, 3.0, num_blocks)
    return ComplexDiagonalLTI(
        lam=lam,
        B=crand(num_blocks, n_u),
        L=crand(num_blocks, n_l),
        c=crand(num_blocks),
        D=rng.standard_normal(n_u) * 0.3,
        delta=delta,
    )


# ---------------------------------------------------------------------------
# differentiable builders
#
# Raw parameterization: lam = -softplus(a) + i b keeps every iterate stable;
# B, L, c are stored as (real, imag) pairs and D as a plain real vector.

PARAM_KEYS = ("a", "b", "B_re", "B_im", "L_re", "L_im", "c_re", "c_im", "D")


def softplus_inv(x):
    return np.log(np.expm1(np.asarray(x, dtype=float)))


def params_from_system(sys):
    """Raw parameter arrays whose rebuilt system equals ``sys`` (m0 dropped)."""
    sys.check_stable()
    return {
        "a": softplus_inv(-sys.lam.real),
        "b": sys.lam.imag.copy(),
        "B_re": sys.B.real.copy(),
        "B_im": sys.B.imag.copy(),
        "L_re": sys.L.real.copy(),
        "L_im": sys.L.imag.copy(),
        "c_re": sys.c.real.copy(),
        "c_im": sys.c.imag.copy(),
        "D": sys.D.copy(),
    }


def system_from_values(values, delta):
    """Plain system from raw parameter arrays (numpy, not tape nodes)."""
    lam = -np.logaddexp(0.0, values["a"]) + 1j * values["b"]
    return ComplexDiagonalLTI(
        lam=lam,
        B=values["B_re"] + 1j * values["B_im"],
        L=values["L_re"] + 1j * values["L_im"],
        c=values["c_re"] + 1j * values["c_im"],
        D=values["D"],
        delta=delta,
    )


def _complex_div(num_re, num_im, den_re, den_im):
    mag = den_re * den_re + den_im * den_im
    return (num_re * den_re + num_im * den_im) / mag, (num_im * den_re - num_re * den_im) / mag


def lag_kernel_nodes(params, taus):
    """Differentiable kernel values at the lag grid ``taus`` (1-D array).

    ``params`` maps PARAM_KEYS to tensors on one tape; all blocks are
    processed as (blocks, lags) arrays. Returns a tensor of shape
    ``taus.shape`` holding sum_j S_j(tau).
    """
    taus = np.asarray(taus, dtype=float)
    nb = params["a"].shape[0]
    alpha = -ad.softplus(params["a"])
    beta = params["b"]
    l_re, l_im = params["L_re"], params["L_im"]
    c_re, c_im = params["c_re"], params["c_im"]
    llh = ad.tensor_sum(l_re * l_re + l_im * l_im, axis=1)
    llt_re = ad.tensor_sum(l_re * l_re - l_im * l_im, axis=1)
    llt_im = 2.0 * ad.tensor_sum(l_re * l_im, axis=1)
    cc = c_re * c_re + c_im * c_im
    c2_re = c_re * c_re - c_im * c_im
    c2_im = 2.0 * c_re * c_im
    num_re = c2_re * llt_re - c2_im * llt_im
    num_im = c2_re * llt_im + c2_im * llt_re
    w_re, w_im = _complex_div(num_re, num_im, alpha, beta)
    col = (nb, 1)
    p_re, p_im = ad.complex_exp_pair(
        ad.reshape(alpha, col) * taus, ad.reshape(beta, col) * taus
    )
    blocks = (
        ad.reshape(-(cc * llh / alpha), col) * p_re
        - (ad.reshape(w_re, col) * p_re - ad.reshape(w_im, col) * p_im)
    )
    return ad.tensor_sum(blocks, axis=0)


def mean_nodes(params, U, delta):
    """Differentiable ZOH mean trajectory for inputs ``U`` (tensor or array).

    The initial state mean is zero; row k of ``U`` holds u(k delta). All
    blocks run as one batched scan.
    """
    nb = params["a"].shape[0]
    n = U.shape[0]
    tape = params["a"].tape
    u_node = U if isinstance(U, ad.Tensor) else tape.constant(U)
    feed = ad.matmul(u_node, params["D"])
    alpha = -ad.softplus(params["a"])
    beta = params["b"]
    ab_re, ab_im = ad.complex_exp_pair(alpha * delta, beta * delta)
    phi_re, phi_im = _complex_div(ab_re - 1.0, ab_im, alpha, beta)
    bu_re = ad.transpose(ad.matmul(u_node, ad.transpose(params["B_re"])))
    bu_im = ad.transpose(ad.matmul(u_node, ad.transpose(params["B_im"])))
    col = (nb, 1)
    phi_re, phi_im = ad.reshape(phi_re, col), ad.reshape(phi_im, col)
    d_re = phi_re * bu_re - phi_im * bu_im
    d_im = phi_re * bu_im + phi_im * bu_re
    zeros = tape.constant(np.zeros((nb, 1)))
    if n > 1:
        d_re = ad.concat([zeros, d_re[(slice(None), slice(1, None))]], axis=1)
        d_im = ad.concat([zeros, d_im[(slice(None), slice(1, None))]], axis=1)
    else:
        d_re, d_im = zeros, zeros
    x_re, x_im = ad.cumulative_scan(ab_re, ab_im, d_re, d_im)
    contrib = ad.reshape(params["c_re"], col) * x_re - ad.reshape(params["c_im"], col) * x_im
    return feed + 2.0 * ad.tensor_sum(contrib, axis=0)
