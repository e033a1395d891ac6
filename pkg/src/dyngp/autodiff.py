"""Tape-based reverse-mode differentiation over numpy float64 arrays.

The engine records a linear tape of operation records. Each record holds the
input nodes, the output nodes, and a backward closure mapping output adjoints
to input adjoints. Complex quantities are carried as (real, imaginary) pairs
of real tensors; ``complex_exp_pair`` and ``cumulative_scan`` are the two ops
that understand the pairing.

Design constraints baked in:

* tapes are single-threaded during construction; ``backward`` never mutates
  the tape, so repeated calls return identical gradient maps;
* ``cumulative_scan`` makes the linear recurrence ``x_k = a x_{k-1} + b_k``
  a single O(n) op so long trajectories cost one tape record;
* Cholesky reads only the lower triangle of its input (LAPACK convention),
  so its gradient lands only in the lower triangle.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular as _solve_triangular
from scipy.linalg.lapack import dpotrf as _dpotrf
from scipy.signal import lfilter as _lfilter
from scipy.special import expit as _expit

from .errors import (
    ContractError,
    DomainError,
    NotPositiveDefiniteError,
    ShapeMismatchError,
)

__all__ = [
    "Tensor",
    "Tape",
    "record",
    "backward",
    "cholesky_jittered",
    "check_gradient",
    "DEFAULT_JITTER_SCHEDULE",
    "OP_KINDS",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "transpose",
    "tensor_sum",
    "exp",
    "log",
    "softplus",
    "negate",
    "concat",
    "take",
    "reshape",
    "sqrt",
    "clamp_min",
    "cholesky",
    "triangular_solve",
    "complex_exp_pair",
    "cumulative_scan",
]

DEFAULT_JITTER_SCHEDULE = (1e-6, 1e-5, 1e-4, 1e-3)


class Tensor:
    """A node on a tape: a float64 array plus backward bookkeeping."""

    __slots__ = ("values", "op", "requires_grad", "tape", "name")

    def __init__(self, values, tape, op="constant", requires_grad=False, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.tape = tape
        self.op = op
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def item(self):
        return float(self.values.reshape(()))

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.values.shape})"

    # Operator sugar; plain numbers/arrays are lifted to constants.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(self.tape, other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(self.tape, other), self)

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


class _OpRecord:
    __slots__ = ("inputs", "outputs", "backward_fn", "kind", "needs_grad")

    def __init__(self, kind, inputs, outputs, backward_fn):
        self.kind = kind
        self.inputs = inputs
        self.outputs = outputs
        self.backward_fn = backward_fn
        self.needs_grad = any(i.requires_grad for i in inputs)


class Tape:
    """Ordered record of operations with a leaf registry."""

    def __init__(self):
        self.records = []
        self.leaves = []

    def leaf(self, values, name=None):
        node = Tensor(values, self, op="leaf", requires_grad=True, name=name)
        if not np.all(np.isfinite(node.values)):
            raise DomainError(f"leaf {name!r} has non-finite entries")
        self.leaves.append(node)
        return node

    def constant(self, values):
        return Tensor(values, self, op="constant", requires_grad=False)

    def _emit(self, kind, inputs, out_values, backward_fn):
        outputs = tuple(
            Tensor(v, self, op=kind, requires_grad=any(i.requires_grad for i in inputs))
            for v in out_values
        )
        self.records.append(_OpRecord(kind, tuple(inputs), outputs, backward_fn))
        return outputs if len(outputs) > 1 else outputs[0]


def _as_tensor(tape, x):
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise ContractError("operands recorded on different tapes")
        return x
    return tape.constant(x)


def _tape_of(*args):
    for a in args:
        if isinstance(a, Tensor):
            return a.tape
    raise ContractError("at least one operand must be a Tensor")


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(kind, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatchError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(x, y):
    tape = _tape_of(x, y)
    x, y = _as_tensor(tape, x), _as_tensor(tape, y)
    _check_broadcast("add", x.values, y.values)

    def bwd(gs):
        g = gs[0]
        return (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape))

    return tape._emit("add", (x, y), (x.values + y.values,), bwd)


def sub(x, y):
    tape = _tape_of(x, y)
    x, y = _as_tensor(tape, x), _as_tensor(tape, y)
    _check_broadcast("sub", x.values, y.values)

    def bwd(gs):
        g = gs[0]
        return (_unbroadcast(g, x.shape), _unbroadcast(-g, y.shape))

    return tape._emit("sub", (x, y), (x.values - y.values,), bwd)


def mul(x, y):
    tape = _tape_of(x, y)
    x, y = _as_tensor(tape, x), _as_tensor(tape, y)
    _check_broadcast("mul", x.values, y.values)
    xv, yv = x.values, y.values
    need_x, need_y = x.requires_grad, y.requires_grad

    def bwd(gs):
        g = gs[0]
        return (
            _unbroadcast(g * yv, x.shape) if need_x else None,
            _unbroadcast(g * xv, y.shape) if need_y else None,
        )

    return tape._emit("mul", (x, y), (xv * yv,), bwd)


def div(x, y):
    tape = _tape_of(x, y)
    x, y = _as_tensor(tape, x), _as_tensor(tape, y)
    _check_broadcast("div", x.values, y.values)
    if np.any(y.values == 0.0):
        raise DomainError("div: zero denominator")
    xv, yv = x.values, y.values
    out = xv / yv
    need_x, need_y = x.requires_grad, y.requires_grad

    def bwd(gs):
        g = gs[0]
        return (
            _unbroadcast(g / yv, x.shape) if need_x else None,
            _unbroadcast(-g * out / yv, y.shape) if need_y else None,
        )

    return tape._emit("div", (x, y), (out,), bwd)


def negate(x):
    tape = _tape_of(x)
    x = _as_tensor(tape, x)

    def bwd(gs):
        return (-gs[0],)

    return tape._emit("negate", (x,), (-x.values,), bwd)


def exp(x):
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    out = np.exp(x.values)

    def bwd(gs):
        return (gs[0] * out,)

    return tape._emit("exp", (x,), (out,), bwd)


def log(x):
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    if np.any(x.values <= 0.0):
        raise DomainError("log: non-positive argument")
    xv = x.values

    def bwd(gs):
        return (gs[0] / xv,)

    return tape._emit("log", (x,), (np.log(xv),), bwd)


def softplus(x):
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    xv = x.values

    def bwd(gs):
        return (gs[0] * _expit(xv),)

    return tape._emit("softplus", (x,), (np.logaddexp(0.0, xv),), bwd)


def sqrt(x):
    """Elementwise square root with a guarded gradient at zero.

    The adjoint at exactly zero is defined as 0 (subgradient choice) so that
    clamped variances never propagate infinities.
    """
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    if np.any(x.values < 0.0):
        raise DomainError("sqrt: negative argument")
    out = np.sqrt(x.values)

    def bwd(gs):
        with np.errstate(divide="ignore"):
            d = np.where(out > 0.0, 0.5 / np.where(out > 0.0, out, 1.0), 0.0)
        return (gs[0] * d,)

    return tape._emit("sqrt", (x,), (out,), bwd)


def clamp_min(x, floor):
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    floor = float(floor)
    mask = (x.values >= floor).astype(np.float64)

    def bwd(gs):
        return (gs[0] * mask,)

    return tape._emit("clamp_min", (x,), (np.maximum(x.values, floor),), bwd)


# ---------------------------------------------------------------------------
# shape / structure


def tensor_sum(x, axis=None, keepdims=False):
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    shape = x.shape

    def bwd(gs):
        g = gs[0]
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return tape._emit("sum", (x,), (x.values.sum(axis=axis, keepdims=keepdims),), bwd)


def transpose(x, axes=None):
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)

    def bwd(gs):
        g = gs[0]
        return (np.transpose(g, inv) if axes is not None else np.transpose(g),)

    return tape._emit("transpose", (x,), (np.transpose(x.values, axes),), bwd)


def reshape(x, shape):
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    old = x.shape

    def bwd(gs):
        return (gs[0].reshape(old),)

    return tape._emit("reshape", (x,), (x.values.reshape(shape),), bwd)


def concat(xs, axis=0):
    tape = _tape_of(*xs)
    xs = [_as_tensor(tape, x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    offsets = np.cumsum([0] + sizes)

    def bwd(gs):
        g = gs[0]
        slicer = [slice(None)] * g.ndim
        outs = []
        for i in range(len(sizes)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            outs.append(g[tuple(slicer)])
        return tuple(outs)

    return tape._emit("concat", tuple(xs), (np.concatenate([x.values for x in xs], axis=axis),), bwd)


def take(x, key):
    """Basic or fancy indexing; backward scatter-adds into the source."""
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    out = x.values[key]
    shape = x.shape
    # 1-D source gathered by an integer array: bincount beats np.add.at
    fast_gather = (
        len(shape) == 1
        and isinstance(key, np.ndarray)
        and key.dtype.kind in "iu"
    )

    def bwd(gs):
        if fast_gather:
            buf = np.bincount(key.ravel(), weights=gs[0].ravel(), minlength=shape[0])
            return (buf,)
        buf = np.zeros(shape)
        np.add.at(buf, key, gs[0])
        return (buf,)

    return tape._emit("slice", (x,), (np.array(out, copy=True),), bwd)


# ---------------------------------------------------------------------------
# linear algebra


def _matmul_check(a, b):
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeMismatchError("matmul: operands must be at least 1-D")
    if a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise ShapeMismatchError(f"matmul: inner dimensions {a.shape} @ {b.shape}")
    if a.ndim > 2 or b.ndim > 2:
        raise ShapeMismatchError("matmul: only 1-D/2-D operands are supported")


def matmul(x, y):
    tape = _tape_of(x, y)
    x, y = _as_tensor(tape, x), _as_tensor(tape, y)
    xv, yv = x.values, y.values
    _matmul_check(xv, yv)
    need_x, need_y = x.requires_grad, y.requires_grad

    def bwd(gs):
        g = gs[0]
        x2 = xv if xv.ndim == 2 else xv[None, :]
        y2 = yv if yv.ndim == 2 else yv[:, None]
        g2 = g.reshape(x2.shape[0], y2.shape[1])
        gx = (g2 @ y2.T).reshape(xv.shape) if need_x else None
        gy = (x2.T @ g2).reshape(yv.shape) if need_y else None
        return (gx, gy)

    return tape._emit("matmul", (x, y), (xv @ yv,), bwd)


def _phi(m):
    """Lower triangle with halved diagonal (Cholesky pullback helper)."""
    out = np.tril(m)
    out[np.diag_indices_from(out)] *= 0.5
    return out


def _raw_cholesky(values):
    """LAPACK potrf on the lower triangle; returns (L, failing_pivot or None)."""
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ShapeMismatchError(f"cholesky: expected square matrix, got {values.shape}")
    c, info = _dpotrf(values, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        return None, info - 1
    if info < 0:
        raise DomainError(f"cholesky: illegal value in argument {-info}")
    return c, None


def cholesky(x):
    """Lower Cholesky factor; only the lower triangle of ``x`` is read."""
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    factor, pivot = _raw_cholesky(x.values)
    if factor is None:
        raise NotPositiveDefiniteError(
            f"cholesky: matrix not positive definite (pivot {pivot})", pivot_index=pivot
        )

    def bwd(gs):
        # Murray (2016): Abar = Phi(L^{-T} (P + P^T) L^{-1}), P = Phi(L^T Lbar).
        # Since forward reads only tril(x), the sensitivity lands in tril form.
        lbar = gs[0]
        p = _phi(factor.T @ lbar)
        w = _solve_triangular(factor, p + p.T, lower=True, trans="T", check_finite=False)
        abar = _solve_triangular(factor, w.T, lower=True, trans="T", check_finite=False).T
        return (_phi(abar),)

    return tape._emit("cholesky", (x,), (factor,), bwd)


def triangular_solve(a, b, lower=True, trans=False):
    """Solve ``op(A) X = B`` for triangular ``A`` (``op`` transposes if ``trans``)."""
    tape = _tape_of(a, b)
    a, b = _as_tensor(tape, a), _as_tensor(tape, b)
    av, bv = a.values, b.values
    if av.ndim != 2 or av.shape[0] != av.shape[1]:
        raise ShapeMismatchError(f"triangular_solve: A must be square, got {av.shape}")
    if bv.shape[0] != av.shape[0]:
        raise ShapeMismatchError(f"triangular_solve: A {av.shape} vs B {bv.shape}")
    sol = _solve_triangular(av, bv, lower=lower, trans="T" if trans else "N", check_finite=False)
    need_a = a.requires_grad

    def bwd(gs):
        g = gs[0]
        # With M = op(A): X = M^-1 B, so Bbar = M^-T Xbar and Mbar = -Bbar X^T.
        bbar = _solve_triangular(
            av, g, lower=lower, trans="N" if trans else "T", check_finite=False
        )
        abar = None
        if need_a:
            sol2 = sol if sol.ndim == 2 else sol[:, None]
            bbar2 = bbar if bbar.ndim == 2 else bbar[:, None]
            mbar = -bbar2 @ sol2.T
            abar = mbar.T if trans else mbar
            abar = np.tril(abar) if lower else np.triu(abar)
        return (abar, bbar.reshape(bv.shape))

    return tape._emit("triangular_solve", (a, b), (sol,), bwd)


# ---------------------------------------------------------------------------
# complex pairs


def complex_exp_pair(a, b):
    """exp(a + i b) as the real pair (e^a cos b, e^a sin b)."""
    tape = _tape_of(a, b)
    a, b = _as_tensor(tape, a), _as_tensor(tape, b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"complex_exp_pair: shapes {a.shape} vs {b.shape}")
    ea = np.exp(a.values)
    re = ea * np.cos(b.values)
    im = ea * np.sin(b.values)

    def bwd(gs):
        gre, gim = gs
        ga = gre * re + gim * im
        gb = -gre * im + gim * re
        return (ga, gb)

    return tape._emit("complex_exp_pair", (a, b), (re, im), bwd)


def cumulative_scan(a_re, a_im, b_re, b_im):
    """Complex linear recurrence ``x_k = a x_{k-1} + b_k`` with ``x_-1 = 0``.

    Either ``a`` is a scalar pair and ``b`` a 1-D pair, or ``a`` is a
    (rows,) pair and ``b`` a (rows, n) pair scanned independently per row
    (one recurrence per block). Returns the trajectory pair.
    """
    tape = _tape_of(a_re, a_im, b_re, b_im)
    a_re, a_im = _as_tensor(tape, a_re), _as_tensor(tape, a_im)
    b_re, b_im = _as_tensor(tape, b_re), _as_tensor(tape, b_im)
    if a_re.shape != a_im.shape or b_re.shape != b_im.shape:
        raise ShapeMismatchError("cumulative_scan: pair shapes must match")
    batched = b_re.ndim == 2
    if batched:
        if a_re.shape != (b_re.shape[0],):
            raise ShapeMismatchError("cumulative_scan: need one multiplier per row")
    elif b_re.ndim == 1:
        if a_re.values.size != 1:
            raise ShapeMismatchError("cumulative_scan: multiplier must be scalar")
    else:
        raise ShapeMismatchError("cumulative_scan: drive must be 1-D or 2-D")
    a = np.atleast_1d(a_re.values + 1j * a_im.values)
    b = np.atleast_2d(b_re.values + 1j * b_im.values)
    x = np.empty_like(b)
    for j in range(b.shape[0]):
        x[j] = _lfilter([1.0], [1.0, -a[j]], b[j])

    def bwd(gs):
        g = np.atleast_2d(gs[0] + 1j * gs[1])
        # Reverse scan: s_k = g_k + conj(a) s_{k+1}; then bbar = s and
        # abar = sum_k conj(x_{k-1}) s_k, per row.
        s = np.empty_like(g)
        abar = np.empty(b.shape[0], dtype=complex)
        for j in range(b.shape[0]):
            s[j] = _lfilter([1.0], [1.0, -np.conj(a[j])], g[j, ::-1])[::-1]
            xprev = np.concatenate([[0.0 + 0.0j], x[j, :-1]])
            abar[j] = np.sum(np.conj(xprev) * s[j])
        return (
            abar.real.reshape(a_re.shape),
            abar.imag.reshape(a_im.shape),
            s.real.reshape(b_re.shape),
            s.imag.reshape(b_im.shape),
        )

    out_re = x.real.reshape(b_re.shape).copy()
    out_im = x.imag.reshape(b_im.shape).copy()
    return tape._emit("cumulative_scan", (a_re, a_im, b_re, b_im), (out_re, out_im), bwd)


# ---------------------------------------------------------------------------
# dispatch, backward, utilities

OP_KINDS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "matmul": matmul,
    "transpose": transpose,
    "sum": tensor_sum,
    "exp": exp,
    "log": log,
    "softplus": softplus,
    "negate": negate,
    "concat": concat,
    "slice": take,
    "reshape": reshape,
    "sqrt": sqrt,
    "clamp_min": clamp_min,
    "cholesky": cholesky,
    "triangular_solve": triangular_solve,
    "complex_exp_pair": complex_exp_pair,
    "cumulative_scan": cumulative_scan,
}


def record(op_kind, inputs, **kwargs):
    """Record one op by name. ``concat`` takes the node list as its single input."""
    if op_kind not in OP_KINDS:
        raise ContractError(f"unknown op kind {op_kind!r}")
    fn = OP_KINDS[op_kind]
    if op_kind == "concat":
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)


def backward(tape, output):
    """Adjoints of a scalar output w.r.t. every requires_grad leaf.

    Pure function of the tape: repeated calls return identical maps, and the
    tape itself is left untouched.
    """
    if not isinstance(output, Tensor):
        raise ContractError("backward: output must be a Tensor")
    if output.values.size != 1:
        raise ContractError(f"backward: output must be scalar, got shape {output.shape}")
    adjoint = {id(output): np.ones_like(output.values)}
    for rec in reversed(tape.records):
        if not rec.needs_grad:
            continue
        out_grads = [adjoint.get(id(o)) for o in rec.outputs]
        if all(g is None for g in out_grads):
            continue
        out_grads = [
            g if g is not None else np.zeros_like(o.values)
            for g, o in zip(out_grads, rec.outputs)
        ]
        in_grads = rec.backward_fn(out_grads)
        for node, g in zip(rec.inputs, in_grads):
            if g is None or not node.requires_grad:
                continue
            key = id(node)
            if key in adjoint:
                adjoint[key] = adjoint[key] + np.asarray(g, dtype=np.float64)
            else:
                adjoint[key] = np.asarray(g, dtype=np.float64)
    return {
        leaf: adjoint.get(id(leaf), np.zeros_like(leaf.values))
        for leaf in tape.leaves
        if leaf.requires_grad
    }


def cholesky_jittered(x, jitter_schedule=DEFAULT_JITTER_SCHEDULE):
    """Cholesky of ``x + eps I`` for the smallest workable eps.

    The schedule is relative to the mean diagonal of ``x``; eps = 0 is always
    tried first. Returns ``(factor, eps_used)``. Raises
    :class:`NotPositiveDefiniteError` naming the smallest failed pivot if the
    whole schedule fails.
    """
    tape = _tape_of(x)
    x = _as_tensor(tape, x)
    values = x.values
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ShapeMismatchError(f"cholesky_jittered: expected square matrix, got {values.shape}")
    scale = float(np.mean(np.diag(values)))
    if scale <= 0.0:
        scale = 1.0
    worst_pivot = None
    for rel in (0.0,) + tuple(jitter_schedule):
        eps = rel * scale
        trial = values if eps == 0.0 else values + eps * np.eye(values.shape[0])
        factor, pivot = _raw_cholesky(trial)
        if factor is None:
            worst_pivot = pivot if worst_pivot is None else min(worst_pivot, pivot)
            continue
        node = x if eps == 0.0 else add(x, tape.constant(eps * np.eye(values.shape[0])))
        return cholesky(node), eps
    raise NotPositiveDefiniteError(
        f"matrix not positive definite after jitter schedule {tuple(jitter_schedule)} "
        f"(smallest failed pivot index {worst_pivot})",
        pivot_index=worst_pivot,
    )


def check_gradient(fn, params, step=1e-5):
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``fn`` maps a dict of leaf tensors (one per entry of ``params``) to a
    scalar tensor; ``params`` maps names to float arrays. Returns the maximum
    relative discrepancy over all coordinates.
    """

    def evaluate(values, want_grads):
        tape = Tape()
        leaves = {k: tape.leaf(v, name=k) for k, v in values.items()}
        out = fn(leaves)
        val = out.values.reshape(())
        if not np.isfinite(val):
            raise DomainError("check_gradient: non-finite function value")
        if not want_grads:
            return float(val), None
        grads = backward(tape, out)
        return float(val), {k: grads[leaves[k]] for k in values}

    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    _, analytic = evaluate(params, want_grads=True)
    worst = 0.0
    for name, base in params.items():
        flat = base.reshape(-1)
        for i in range(flat.size):
            bumped = {k: v.copy() for k, v in params.items()}
            bumped[name].reshape(-1)[i] = flat[i] + step
            hi, _ = evaluate(bumped, want_grads=False)
            bumped[name].reshape(-1)[i] = flat[i] - step
            lo, _ = evaluate(bumped, want_grads=False)
            fd = (hi - lo) / (2.0 * step)
            ad = float(analytic[name].reshape(-1)[i])
            denom = max(abs(ad), abs(fd), 1e-2)
            worst = max(worst, abs(ad - fd) / denom)
    return worst
