"""Deep architectures of dynamic and static GP layers trained by doubly
stochastic variational inference.

Every layer keeps one sparse GP per output unit. Variational states are
whitened: q describes the deviation from the layer's prior mean in
coordinates scaled by chol(K(Z, Z)). Two consequences drive the design:

* the KL term depends only on the whitened q parameters, and
* conditionals never need the prior mean at the inducing points, which is
  what makes contiguous-window minibatching possible for inner dynamic
  layers (their inputs are only realized on the window).

Dynamic-layer inducing inputs are time-grid indices sampled once (heavier
weight near the end of training time) and then frozen; static-layer inducing
inputs are free parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import autodiff as ad
from . import lti, static_kernels as sk
from .errors import CardinalityError, DomainError, ShapeMismatchError, TrainingError
from .exact_gp import _chol_jittered_np, _softplus_np
from .optim import Adam, AdamConfig

__all__ = [
    "VariationalState",
    "GaussianMarginals",
    "DynamicLayer",
    "StaticLayer",
    "Architecture",
    "LayerSpec",
    "PredictiveSamples",
    "TrainConfig",
    "select_inducing_times",
    "weighted_order_sample",
    "horseshoe_log_prior",
    "kl_term",
    "sample_layer",
    "layer_conditional",
    "elbo",
    "train_svi",
    "predict",
    "build_architecture",
]

HORSESHOE_CONST = 1.0 / np.sqrt(2.0 * np.pi**3)
MIN_VARIANCE = 1e-12


# ---------------------------------------------------------------------------
# inducing-point selection


def weighted_order_sample(weights, m, rng):
    """Weighted sampling without replacement, returned in draw order.

    Uses exponential races (Gumbel top-k), which reproduces sequential
    renormalized categorical draws exactly. Zero-weight items are drawn only
    after every positive-weight item is exhausted.
    """
    weights = np.asarray(weights, dtype=float)
    n = weights.shape[0]
    if not 1 <= m <= n:
        raise CardinalityError(f"cannot draw {m} items from {n}")
    if np.any(weights < 0):
        raise DomainError("weights must be non-negative")
    with np.errstate(divide="ignore"):
        keys = np.log(weights) + rng.gumbel(size=n)
    order = np.argsort(-keys, kind="stable")
    return order[:m]


def select_inducing_times(times, m, seed):
    """Sorted indices of m inducing times, weight log(1 + t_i / t_n)."""
    times = np.asarray(times, dtype=float)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights = np.log1p(times / times[-1])
    return np.sort(weighted_order_sample(weights, m, rng))


# ---------------------------------------------------------------------------
# priors, KL, sampling


def horseshoe_log_prior(values, scale=0.1):
    """Sum of log horseshoe surrogate densities, log((K/tau) log(1 + 2 tau^2/x^2)).

    Works on tensors (differentiable) or plain arrays. The argument is
    floored at |x| = 1e-12 so the spike at the origin stays finite.
    """
    if scale <= 0:
        raise DomainError("horseshoe scale must be positive")
    tau2 = 2.0 * scale * scale
    if isinstance(values, ad.Tensor):
        x2 = ad.clamp_min(values * values, 1e-24)
        inner = ad.log(ad.log(1.0 + tau2 / x2))
        n = values.values.size
        return ad.tensor_sum(inner) + n * np.log(HORSESHOE_CONST / scale)
    x2 = np.maximum(np.asarray(values, dtype=float) ** 2, 1e-24)
    return float(np.sum(np.log(np.log1p(tau2 / x2))) + x2.size * np.log(HORSESHOE_CONST / scale))


@dataclass
class VariationalState:
    """Whitened variational state of one sparse GP unit.

    ``z`` holds grid indices (dynamic layers) or an (m, d) array of inducing
    inputs (static layers). ``q_mean`` and ``q_chol_raw`` are whitened; the
    used Cholesky factor is tril(raw, -1) + diag(softplus(raw diagonal)).
    """

    z: np.ndarray
    q_mean: np.ndarray
    q_chol_raw: np.ndarray

    @classmethod
    def fresh(cls, z, m):
        raw = np.zeros((m, m))
        np.fill_diagonal(raw, lti.softplus_inv(1e-2))
        return cls(z=z, q_mean=np.zeros(m), q_chol_raw=raw)

    @property
    def m(self):
        return self.q_mean.shape[0]

    def whitened_chol(self):
        out = np.tril(self.q_chol_raw, -1)
        np.fill_diagonal(out, _softplus_np(np.diag(self.q_chol_raw)))
        return out


def _whitened_chol_nodes(q_chol_raw):
    m = q_chol_raw.shape[0]
    strict = np.tril(np.ones((m, m)), -1)
    eye = np.eye(m)
    return q_chol_raw * strict + ad.softplus(q_chol_raw * eye + (eye - 1.0) * 40.0) * eye


def kl_term(vstate, prior_mean_at_z=None, K_zz=None):
    """KL between the unit's variational Gaussian and its prior at Z.

    In whitened coordinates this is 0.5 (||mu||^2 + ||S||_F^2 - m
    - 2 sum log diag S); the value is identical for every prior mean and
    K(Z, Z) because whitening maps the prior to N(0, I), so the optional
    arguments only document which unwhitened pair is implied.
    """
    s = vstate.whitened_chol()
    mu = vstate.q_mean
    m = vstate.m
    return float(
        0.5 * (mu @ mu + np.sum(s * s) - m) - np.sum(np.log(np.diag(s)))
    )


def _kl_nodes(q_mean, q_chol_raw):
    m = q_mean.shape[0]
    s = _whitened_chol_nodes(q_chol_raw)
    diag = s[(np.arange(m), np.arange(m))]
    return 0.5 * (
        ad.tensor_sum(q_mean * q_mean) + ad.tensor_sum(s * s) - float(m)
    ) - ad.tensor_sum(ad.log(diag))


@dataclass
class GaussianMarginals:
    """Per-point means and variances of one GP unit (tensors or arrays)."""

    mean: object
    variance: object


def sample_layer(marginals, rng):
    """Reparameterized draw mean + sqrt(var) eps with eps ~ N(0, 1).

    Variances below -1e-10 are treated as numerical failures; small negative
    values are clamped to zero (a zero-variance point returns its mean
    exactly).
    """
    mean, var = marginals.mean, marginals.variance
    if isinstance(var, ad.Tensor):
        if float(var.values.min()) < -1e-10:
            raise DomainError(f"negative marginal variance {var.values.min()}")
        eps = rng.standard_normal(var.values.shape)
        return mean + ad.sqrt(ad.clamp_min(var, 0.0)) * eps
    var = np.asarray(var, dtype=float)
    if var.min() < -1e-10:
        raise DomainError(f"negative marginal variance {var.min()}")
    eps = rng.standard_normal(var.shape)
    return mean + np.sqrt(np.maximum(var, 0.0)) * eps


# ---------------------------------------------------------------------------
# layers


class DynamicLayer:
    """Width-many LTI-kernel GPs over time, sharing frozen inducing times."""

    kind = "dynamic"

    def __init__(self, index, width, in_dim, num_blocks, n_l, delta, inducing):
        self.index = index
        self.width = width
        self.in_dim = in_dim
        self.num_blocks = num_blocks
        self.n_l = n_l
        self.delta = float(delta)
        self.inducing = inducing
        self.z_idx = None
        self.vstates = []

    def prefix(self, unit):
        return f"layer{self.index}.unit{unit}."

    def init_params(self, rng):
        params = {}
        scale = 1.0 / np.sqrt(self.num_blocks)
        for w in range(self.width):
            p = self.prefix(w)
            params[p + "a"] = rng.uniform(0.1, 2.0, self.num_blocks)
            params[p + "b"] = rng.uniform(0.0, 0.5 * np.pi / self.delta, self.num_blocks)
            params[p + "B_re"] = scale * rng.standard_normal((self.num_blocks, self.in_dim))
            params[p + "B_im"] = scale * rng.standard_normal((self.num_blocks, self.in_dim))
            params[p + "L_re"] = scale * rng.standard_normal((self.num_blocks, self.n_l))
            params[p + "L_im"] = scale * rng.standard_normal((self.num_blocks, self.n_l))
            params[p + "c_re"] = scale * rng.standard_normal(self.num_blocks)
            params[p + "c_im"] = scale * rng.standard_normal(self.num_blocks)
            params[p + "D"] = np.zeros(self.in_dim)
        return params

    def init_variational(self, times, rng, params):
        m = min(self.inducing, len(times))
        self.z_idx = select_inducing_times(times, m, rng)
        self.vstates = [VariationalState.fresh(self.z_idx.copy(), m) for _ in range(self.width)]
        for w, vs in enumerate(self.vstates):
            p = self.prefix(w)
            params[p + "q_mean"] = vs.q_mean
            params[p + "q_chol"] = vs.q_chol_raw

    def unit_param_nodes(self, leaves, unit):
        p = self.prefix(unit)
        return {k: leaves[p + k] for k in lti.PARAM_KEYS}

    def unit_param_values(self, params, unit):
        p = self.prefix(unit)
        return {k: params[p + k] for k in lti.PARAM_KEYS}

    def time_constant_steps(self, params):
        worst = 0.0
        for w in range(self.width):
            alpha = _softplus_np(params[self.prefix(w) + "a"])
            worst = max(worst, float(np.max(1.0 / alpha)) / self.delta)
        return worst

    def conditional_pieces(self, tape, leaves, window_idx, n_grid):
        """Input-independent pieces per unit: projection A, variance, q terms."""
        pieces = []
        for w in range(self.width):
            p = self.prefix(w)
            nodes = self.unit_param_nodes(leaves, w)
            lags = lti.lag_kernel_nodes(nodes, np.arange(n_grid) * self.delta)
            S_zz = lags[np.abs(np.subtract.outer(self.z_idx, self.z_idx))]
            factor, _ = ad.cholesky_jittered(S_zz)
            S_xz = lags[np.abs(np.subtract.outer(window_idx, self.z_idx))]
            A = ad.triangular_solve(factor, ad.transpose(S_xz))
            s_w = _whitened_chol_nodes(leaves[p + "q_chol"])
            sa = ad.matmul(ad.transpose(s_w), A)
            var = (
                lags[np.zeros(len(window_idx), dtype=int)]
                - ad.tensor_sum(A * A, axis=0)
                + ad.tensor_sum(sa * sa, axis=0)
            )
            proj_mean = ad.matmul(ad.transpose(A), leaves[p + "q_mean"])
            pieces.append({"nodes": nodes, "A": A, "var": var, "proj_mean": proj_mean})
        return pieces

    def unit_marginals(self, pieces, unit, input_node):
        """Marginals for one unit given the window input trajectory."""
        piece = pieces[unit]
        prior = lti.mean_nodes(piece["nodes"], input_node, self.delta)
        return GaussianMarginals(mean=prior + piece["proj_mean"], variance=piece["var"])

    # numpy prediction path -------------------------------------------------

    def predict_pieces(self, params, grid_idx, n_grid):
        pieces = []
        for w in range(self.width):
            values = self.unit_param_values(params, w)
            sys = lti.system_from_values(values, self.delta)
            lags = lti.kernel_lags(sys, n_grid)
            S_zz = lags[np.abs(np.subtract.outer(self.z_idx, self.z_idx))]
            factor, _ = _chol_jittered_np(S_zz)
            S_xz = lags[np.abs(np.subtract.outer(grid_idx, self.z_idx))]
            A = solve_triangular(factor, S_xz.T, lower=True)
            s_w = np.tril(params[self.prefix(w) + "q_chol"], -1)
            np.fill_diagonal(s_w, _softplus_np(np.diag(params[self.prefix(w) + "q_chol"])))
            sa = s_w.T @ A
            var = lags[0] - np.sum(A * A, axis=0) + np.sum(sa * sa, axis=0)
            proj = A.T @ params[self.prefix(w) + "q_mean"]
            pieces.append({"sys": sys, "A": A, "var": var, "proj": proj})
        return pieces

    def predict_unit_marginals(self, pieces, unit, U_in):
        piece = pieces[unit]
        prior = lti.mean_trajectory(piece["sys"], U_in)
        return GaussianMarginals(mean=prior + piece["proj"], variance=piece["var"])


class StaticLayer:
    """Width-many Matern-3/2 GPs over the previous layer's outputs."""

    kind = "static"

    def __init__(self, index, width, in_dim, inducing, mean_kind="constant"):
        self.index = index
        self.width = width
        self.in_dim = in_dim
        self.inducing = inducing
        self.mean_kind = mean_kind
        self.vstates = []

    def prefix(self, unit):
        return f"layer{self.index}.unit{unit}."

    def init_params(self, rng):
        params = {}
        for w in range(self.width):
            p = self.prefix(w)
            params[p + "raw_ell"] = np.full(self.in_dim, lti.softplus_inv(1.0))
            params[p + "raw_scale"] = np.array(lti.softplus_inv(1.0))
            if self.mean_kind == "constant":
                params[p + "mean_value"] = np.array(0.0)
            elif self.mean_kind == "linear":
                params[p + "mean_w"] = np.zeros(self.in_dim)
                params[p + "mean_b"] = np.array(0.0)
        return params

    def init_variational(self, example_inputs, rng, params):
        m = min(self.inducing, example_inputs.shape[0])
        idx = rng.choice(example_inputs.shape[0], size=m, replace=False)
        z = example_inputs[idx].copy()
        spread = np.std(z, axis=0)
        spread[spread < 1e-6] = 1.0
        z = z + 1e-3 * spread * rng.standard_normal(z.shape)
        for w in range(self.width):
            vs = VariationalState.fresh(z.copy(), m)
            self.vstates.append(vs)
            p = self.prefix(w)
            params[p + "z"] = vs.z
            params[p + "q_mean"] = vs.q_mean
            params[p + "q_chol"] = vs.q_chol_raw

    def time_constant_steps(self, params):
        return 0.0

    def _mean_nodes(self, leaves, unit, x_node):
        p = self.prefix(unit)
        n = x_node.shape[0]
        if self.mean_kind == "zero":
            return x_node.tape.constant(np.zeros(n))
        if self.mean_kind == "constant":
            return leaves[p + "mean_value"] + x_node.tape.constant(np.zeros(n))
        return ad.matmul(x_node, leaves[p + "mean_w"]) + leaves[p + "mean_b"]

    def conditional_pieces(self, tape, leaves, window_idx, n_grid):
        """Input-independent pieces: chol of K(Z, Z) and whitened q factor."""
        pieces = []
        for w in range(self.width):
            p = self.prefix(w)
            ell = ad.softplus(leaves[p + "raw_ell"])
            scale = ad.softplus(leaves[p + "raw_scale"])
            z = leaves[p + "z"]
            K_zz = sk.matern_cross_nodes(z, z, ell, scale)
            factor, _ = ad.cholesky_jittered(K_zz)
            pieces.append(
                {
                    "ell": ell,
                    "scale": scale,
                    "z": z,
                    "factor": factor,
                    "s_w": _whitened_chol_nodes(leaves[p + "q_chol"]),
                    "q_mean": leaves[p + "q_mean"],
                }
            )
        return pieces

    def unit_marginals(self, pieces, unit, x_node, leaves=None):
        piece = pieces[unit]
        if not isinstance(x_node, ad.Tensor):
            x_node = piece["z"].tape.constant(np.atleast_2d(x_node))
        K_xz = sk.matern_cross_nodes(x_node, piece["z"], piece["ell"], piece["scale"])
        A = ad.triangular_solve(piece["factor"], ad.transpose(K_xz))
        sa = ad.matmul(ad.transpose(piece["s_w"]), A)
        var = (
            piece["scale"] * np.ones(x_node.shape[0])
            - ad.tensor_sum(A * A, axis=0)
            + ad.tensor_sum(sa * sa, axis=0)
        )
        mean = self._mean_nodes(leaves, unit, x_node) + ad.matmul(
            ad.transpose(A), piece["q_mean"]
        )
        return GaussianMarginals(mean=mean, variance=var)

    # numpy prediction path -------------------------------------------------

    def predict_pieces(self, params, grid_idx, n_grid):
        pieces = []
        for w in range(self.width):
            p = self.prefix(w)
            kp = sk.Matern32Params(
                lengthscales=_softplus_np(params[p + "raw_ell"]),
                scale=float(_softplus_np(params[p + "raw_scale"])),
            )
            z = params[p + "z"]
            factor, _ = _chol_jittered_np(sk.kernel_cross(z, z, kp))
            s_w = np.tril(params[p + "q_chol"], -1)
            np.fill_diagonal(s_w, _softplus_np(np.diag(params[p + "q_chol"])))
            pieces.append({"kp": kp, "z": z, "factor": factor, "s_w": s_w, "params": params, "p": p})
        return pieces

    def predict_unit_marginals(self, pieces, unit, X_in):
        piece = pieces[unit]
        p = piece["p"]
        params = piece["params"]
        K_xz = sk.kernel_cross(X_in, piece["z"], piece["kp"])
        A = solve_triangular(piece["factor"], K_xz.T, lower=True)
        sa = piece["s_w"].T @ A
        var = piece["kp"].scale - np.sum(A * A, axis=0) + np.sum(sa * sa, axis=0)
        if self.mean_kind == "zero":
            prior = np.zeros(X_in.shape[0])
        elif self.mean_kind == "constant":
            prior = np.full(X_in.shape[0], float(params[p + "mean_value"]))
        else:
            prior = X_in @ params[p + "mean_w"] + float(params[p + "mean_b"])
        mean = prior + A.T @ params[p + "q_mean"]
        return GaussianMarginals(mean=mean, variance=var)


# ---------------------------------------------------------------------------
# architecture


@dataclass
class LayerSpec:
    kind: str
    width: int = 1
    inducing: int = 50
    num_blocks: int = 5
    n_l: int = 1
    skip_input: bool = False

    def __post_init__(self):
        if self.kind not in ("dynamic", "static"):
            raise DomainError(f"unknown layer kind {self.kind!r}")


@dataclass
class PredictiveSamples:
    """S x n output samples defining the Gaussian-mixture posterior."""

    samples: np.ndarray
    times: np.ndarray

    def quantiles(self, levels):
        return np.percentile(self.samples, levels, axis=0)

    @property
    def mean(self):
        return self.samples.mean(axis=0)


class Architecture:
    """Ordered GP layers, observation noise, and the shared parameter store."""

    def __init__(self, specs, input_dim, delta, seed=0):
        self.specs = [LayerSpec(**s) if isinstance(s, dict) else s for s in specs]
        self.input_dim = input_dim
        self.delta = float(delta)
        self.seed = seed
        self.layers = []
        self.params = {}
        rng = np.random.default_rng(seed)
        prev_width = input_dim
        for i, spec in enumerate(self.specs):
            in_dim = prev_width + (input_dim if spec.skip_input else 0)
            if spec.kind == "dynamic":
                layer = DynamicLayer(
                    i, spec.width, in_dim, spec.num_blocks, spec.n_l, self.delta, spec.inducing
                )
            else:
                mean_kind = "linear" if i == 0 else "constant"
                layer = StaticLayer(i, spec.width, in_dim, spec.inducing, mean_kind=mean_kind)
            self.params.update(layer.init_params(rng))
            self.layers.append(layer)
            prev_width = spec.width
        if prev_width != 1:
            raise ShapeMismatchError("final layer width must be 1 (scalar output)")
        self.params["raw_noise"] = np.array(lti.softplus_inv(1e-2))
        self._rng_init = rng

    def initialize_variational(self, dataset):
        """Draw inducing times/inputs using the training split of ``dataset``."""
        rng = self._rng_init
        times = dataset.times[: dataset.n_train]
        layer_inputs = dataset.U[: dataset.n_train]
        for layer, spec in zip(self.layers, self.specs):
            if spec.skip_input and layer.index > 0:
                layer_inputs = np.column_stack([layer_inputs, dataset.U[: dataset.n_train]])
            if layer.kind == "dynamic":
                layer.init_variational(times, rng, self.params)
                pieces = layer.predict_pieces(self.params, np.arange(len(times)), len(times))
                outs = [
                    layer.predict_unit_marginals(pieces, w, layer_inputs).mean
                    for w in range(layer.width)
                ]
            else:
                layer.init_variational(layer_inputs, rng, self.params)
                pieces = layer.predict_pieces(self.params, None, None)
                outs = [
                    layer.predict_unit_marginals(pieces, w, layer_inputs).mean
                    for w in range(layer.width)
                ]
            layer_inputs = np.column_stack(outs)

    def noise_variance(self):
        return float(_softplus_np(self.params["raw_noise"]))

    def max_time_constant_steps(self):
        return max((l.time_constant_steps(self.params) for l in self.layers), default=0.0)

    def variational_keys(self):
        return [k for k in self.params if k.endswith(("q_mean", "q_chol"))]

    def dynamic_diffusion_keys(self):
        return [k for k in self.params if k.endswith(("L_re", "L_im"))]

    # serialization ----------------------------------------------------------

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "delta": self.delta,
            "seed": self.seed,
            "specs": [vars(s) for s in self.specs],
            "z_idx": [
                layer.z_idx.tolist() if layer.kind == "dynamic" else None
                for layer in self.layers
            ],
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, payload):
        arch = cls(
            [LayerSpec(**s) for s in payload["specs"]],
            payload["input_dim"],
            payload["delta"],
            payload["seed"],
        )
        arch.params = {k: np.asarray(v, dtype=float) for k, v in payload["params"].items()}
        for layer, z in zip(arch.layers, payload["z_idx"]):
            if layer.kind == "dynamic":
                layer.z_idx = np.asarray(z, dtype=int)
                layer.vstates = [
                    VariationalState(
                        z=layer.z_idx.copy(),
                        q_mean=arch.params[layer.prefix(w) + "q_mean"],
                        q_chol_raw=arch.params[layer.prefix(w) + "q_chol"],
                    )
                    for w in range(layer.width)
                ]
            else:
                layer.vstates = [
                    VariationalState(
                        z=arch.params[layer.prefix(w) + "z"],
                        q_mean=arch.params[layer.prefix(w) + "q_mean"],
                        q_chol_raw=arch.params[layer.prefix(w) + "q_chol"],
                    )
                    for w in range(layer.width)
                ]
        return arch


def build_architecture(specs, dataset, seed=0):
    arch = Architecture(specs, input_dim=dataset.U.shape[1], delta=dataset.delta, seed=seed)
    arch.initialize_variational(dataset)
    return arch


# ---------------------------------------------------------------------------
# the bound


def layer_conditional(layer, tape, leaves, input_node, window_idx, n_grid):
    """Marginals of every unit of ``layer`` for one input trajectory."""
    pieces = layer.conditional_pieces(tape, leaves, window_idx, n_grid)
    if layer.kind == "dynamic":
        return [layer.unit_marginals(pieces, w, input_node) for w in range(layer.width)]
    return [
        layer.unit_marginals(pieces, w, input_node, leaves=leaves) for w in range(layer.width)
    ]


def _stack_columns(tape, columns):
    cols = [ad.reshape(c, (c.shape[0], 1)) for c in columns]
    return cols[0] if len(cols) == 1 else ad.concat(cols, axis=1)


def _forward_samples(arch, tape, leaves, window_idx, n_grid, u_window, mc_samples, rng):
    """Sampled paths through all layers, carried as one (mc * n, width) stack.

    Static-layer kernels and solves then run once per unit instead of once
    per sample; dynamic layers tile their (sample-independent) projections
    and only rerun the per-sample mean recursions. Returns the stacked final
    (mc * n,) node and the total KL.
    """
    n = len(window_idx)
    u_tiled = np.tile(u_window, (mc_samples, 1))
    tile_idx = np.tile(np.arange(n), mc_samples)
    x = tape.constant(u_tiled)
    input_shared = True  # identical rows per sample until the first sampling
    kl_total = None
    for layer, spec in zip(arch.layers, arch.specs):
        pieces = layer.conditional_pieces(tape, leaves, window_idx, n_grid)
        if spec.skip_input and layer.index > 0:
            x = ad.concat([x, tape.constant(u_tiled)], axis=1)
        cols = []
        for w in range(layer.width):
            if layer.kind == "dynamic":
                piece = pieces[w]
                if input_shared:
                    one = lti.mean_nodes(
                        piece["nodes"], x[slice(0, n)], layer.delta
                    )
                    prior = one[tile_idx]
                else:
                    means = [
                        lti.mean_nodes(
                            piece["nodes"], x[slice(s * n, (s + 1) * n)], layer.delta
                        )
                        for s in range(mc_samples)
                    ]
                    prior = means[0] if mc_samples == 1 else ad.concat(means)
                marg = GaussianMarginals(
                    mean=prior + piece["proj_mean"][tile_idx],
                    variance=piece["var"][tile_idx],
                )
            else:
                marg = layer.unit_marginals(pieces, w, x, leaves=leaves)
            cols.append(sample_layer(marg, rng))
        x = _stack_columns(tape, cols)
        input_shared = False
        for w in range(layer.width):
            kl = _kl_nodes(
                leaves[layer.prefix(w) + "q_mean"], leaves[layer.prefix(w) + "q_chol"]
            )
            kl_total = kl if kl_total is None else kl_total + kl
    final = ad.reshape(x, (x.shape[0],))
    return final, kl_total


def elbo(arch, dataset, window_idx, mc_samples, rng, analytic=False):
    """Evidence lower bound on a contiguous window of the training split.

    Monte Carlo over ``mc_samples`` reparameterized forward passes (or the
    closed-form expected log-likelihood for single-layer architectures when
    ``analytic=True``). Returns (tensor, leaves dict).
    """
    window_idx = np.asarray(window_idx, dtype=int)
    n = dataset.n_train
    tape = ad.Tape()
    leaves = {k: tape.leaf(v, name=k) for k, v in arch.params.items()}
    y = dataset.y[window_idx]
    u_window = dataset.U[window_idx]
    noise = ad.softplus(leaves["raw_noise"])
    scale_factor = n / len(window_idx)
    if analytic:
        if len(arch.layers) != 1 or arch.layers[0].width != 1:
            raise DomainError("analytic bound only applies to single-layer scalar models")
        layer = arch.layers[0]
        marg = layer_conditional(
            layer, tape, leaves, tape.constant(u_window), window_idx, n
        )[0]
        resid = tape.constant(y) - marg.mean
        point = (
            -0.5 * np.log(2.0 * np.pi) * float(len(window_idx))
            - 0.5 * float(len(window_idx)) * ad.log(noise)
            - ad.tensor_sum(resid * resid + ad.clamp_min(marg.variance, 0.0)) / (2.0 * noise)
        )
        kl = _kl_nodes(leaves[layer.prefix(0) + "q_mean"], leaves[layer.prefix(0) + "q_chol"])
        return scale_factor * point - kl, leaves
    final, kl_total = _forward_samples(
        arch, tape, leaves, window_idx, n, u_window, mc_samples, rng
    )
    resid = tape.constant(np.tile(y, mc_samples)) - final
    total = (
        -0.5 * np.log(2.0 * np.pi) * float(mc_samples * len(window_idx))
        - 0.5 * float(mc_samples * len(window_idx)) * ad.log(noise)
        - ad.tensor_sum(resid * resid) / (2.0 * noise)
    )
    expected = total / float(mc_samples)
    return scale_factor * expected - kl_total, leaves


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    iterations: int = 500
    windows_per_iter: int = 4
    window_size: int = 375
    mc_samples: int = 8
    step: float = 1e-2
    seed: int = 0
    clip_norm: float | None = 100.0
    horseshoe_scale: float = 0.1
    only_variational: bool = False
    analytic: bool = False


def train_svi(arch, dataset, cfg):
    """Maximize the bound plus log-priors (horseshoe on dynamic diffusion
    entries, uniform elsewhere) with Adam. Returns (arch, trace)."""
    n = dataset.n_train
    window = min(cfg.window_size, n)
    steps_needed = 5.0 * arch.max_time_constant_steps()
    if window < steps_needed:
        warnings.warn(
            f"window of {window} steps is shorter than five dominant time "
            f"constants (~{steps_needed:.0f} steps); the zero-state window "
            "approximation may be poor"
        )
    rng = np.random.default_rng(cfg.seed)
    trainable = (
        {k: v for k, v in arch.params.items() if k in set(arch.variational_keys())}
        if cfg.only_variational
        else arch.params
    )
    opt = Adam(trainable, AdamConfig(step=cfg.step, clip_norm=cfg.clip_norm))
    horseshoe_keys = set(arch.dynamic_diffusion_keys())
    trace = []
    for it in range(cfg.iterations):
        batch_objs = []
        for _ in range(cfg.windows_per_iter):
            start = int(rng.integers(0, n - window + 1))
            idx = np.arange(start, start + window)
            bound, leaves = elbo(arch, dataset, idx, cfg.mc_samples, rng, analytic=cfg.analytic)
            objective = bound
            if not cfg.only_variational:
                for key in horseshoe_keys:
                    objective = objective + horseshoe_log_prior(
                        leaves[key], cfg.horseshoe_scale
                    )
            value = objective.item()
            if not np.isfinite(value):
                bad = [k for k, v in arch.params.items() if not np.all(np.isfinite(v))]
                raise TrainingError(
                    f"objective non-finite at iteration {it} (suspect parameters: {bad or 'objective only'})"
                )
            grads = ad.backward(objective.tape, objective)
            named = {
                leaf.name: g for leaf, g in grads.items() if leaf.name in trainable
            }
            opt.step(named)
            for key in trainable:
                arch.params[key] = trainable[key]
            batch_objs.append(value)
        trace.append(float(np.mean(batch_objs)))
    _sync_vstates(arch)
    return arch, trace


def _sync_vstates(arch):
    for layer in arch.layers:
        for w, vs in enumerate(layer.vstates):
            p = layer.prefix(w)
            vs.q_mean = arch.params[p + "q_mean"]
            vs.q_chol_raw = arch.params[p + "q_chol"]
            if layer.kind == "static":
                vs.z = arch.params[p + "z"]


# ---------------------------------------------------------------------------
# prediction


def predict(arch, U_full, num_samples=300, seed=0, include_observation_noise=True, force_zero_variance=False):
    """Monte-Carlo predictive posterior on the full input grid.

    Dynamic means need the whole input history, so ``U_full`` must start at
    the time origin. Observation noise is added to the returned samples when
    ``include_observation_noise`` (credible intervals are then in
    observation space).
    """
    rng = np.random.default_rng(seed)
    U_full = np.atleast_2d(np.asarray(U_full, dtype=float))
    n = U_full.shape[0]
    grid_idx = np.arange(n)
    out = np.empty((num_samples, n))
    layer_pieces = [
        layer.predict_pieces(arch.params, grid_idx, n) for layer in arch.layers
    ]
    for s in range(num_samples):
        x = U_full
        for layer, spec, pieces in zip(arch.layers, arch.specs, layer_pieces):
            x_in = np.column_stack([x, U_full]) if (spec.skip_input and layer.index > 0) else x
            cols = []
            for w in range(layer.width):
                marg = layer.predict_unit_marginals(pieces, w, x_in)
                if force_zero_variance:
                    cols.append(np.asarray(marg.mean, dtype=float))
                else:
                    cols.append(sample_layer(marg, rng))
            x = np.column_stack(cols)
        out[s] = x[:, 0]
    if include_observation_noise and not force_zero_variance:
        out = out + np.sqrt(arch.noise_variance()) * rng.standard_normal(out.shape)
    times = np.arange(n) * arch.delta
    return PredictiveSamples(samples=out, times=times)
