"""Unit tests for the reverse-mode engine: op-by-op finite-difference checks,
Cholesky machinery, complex-pair ops, and the jittered factorization."""

import numpy as np
import pytest
from scipy.signal import lfilter

from dyngp import autodiff as ad
from dyngp.errors import (
    ContractError,
    DomainError,
    NotPositiveDefiniteError,
    ShapeMismatchError,
)


def scalar_tape(*values):
    tape = ad.Tape()
    return tape, [tape.leaf(np.asarray(v, dtype=float)) for v in values]


class TestBasicOps:
    def test_record_add(self):
        tape, (x, y) = scalar_tape(2.0, 3.0)
        z = ad.record("add", [x, y])
        assert z.item() == 5.0
        grads = ad.backward(tape, z)
        assert grads[x] == pytest.approx(1.0)
        assert grads[y] == pytest.approx(1.0)

    def test_record_exp_identity(self):
        tape, (x,) = scalar_tape(0.0)
        z = ad.record("exp", [x])
        assert z.item() == 1.0
        assert ad.backward(tape, z)[x] == pytest.approx(1.0)

    def test_square_gradient(self):
        tape, (x,) = scalar_tape(3.0)
        z = x * x
        assert ad.backward(tape, z)[x] == pytest.approx(6.0)

    def test_unknown_kind(self):
        tape, (x,) = scalar_tape(1.0)
        with pytest.raises(ContractError):
            ad.record("outer_product", [x, x])

    def test_shape_mismatch(self):
        tape = ad.Tape()
        a = tape.leaf(np.ones((2, 3)))
        b = tape.leaf(np.ones((4, 2)))
        with pytest.raises(ShapeMismatchError):
            ad.add(a, b)
        with pytest.raises(ShapeMismatchError):
            ad.matmul(a, b)

    def test_domain_errors(self):
        tape, (x,) = scalar_tape(-1.0)
        with pytest.raises(DomainError):
            ad.log(x)
        tape = ad.Tape()
        y = tape.leaf(np.array([1.0, 0.0]))
        with pytest.raises(DomainError):
            ad.div(tape.constant(np.ones(2)), y)

    def test_backward_requires_scalar(self):
        tape = ad.Tape()
        x = tape.leaf(np.ones(3))
        y = ad.mul(x, x)
        with pytest.raises(ContractError):
            ad.backward(tape, y)

    def test_backward_is_repeatable(self):
        tape, (x, y) = scalar_tape(1.3, -0.2)
        z = ad.tensor_sum(ad.exp(x) * y + x)
        g1 = ad.backward(tape, z)
        g2 = ad.backward(tape, z)
        assert g1[x] == g2[x]
        assert g1[y] == g2[y]


class TestCholesky:
    def test_known_factor(self):
        tape = ad.Tape()
        a = tape.leaf(np.array([[4.0, 2.0], [2.0, 3.0]]))
        factor = ad.record("cholesky", [a])
        np.testing.assert_allclose(
            factor.values, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], atol=1e-12
        )

    def test_sum_of_factor_gradient_matches_fd(self):
        base = np.array([[4.0, 2.0], [2.0, 3.0]])

        def fn(leaves):
            return ad.tensor_sum(ad.cholesky(leaves["a"]))

        assert ad.check_gradient(fn, {"a": base}, step=1e-5) < 1e-6

    def test_logdet_gradient_at_identity(self):
        tape = ad.Tape()
        a = tape.leaf(np.eye(2))
        factor = ad.cholesky(a)
        diag = ad.take(factor, (np.arange(2), np.arange(2)))
        logdet = ad.tensor_sum(ad.log(diag)) * 2.0
        grad = ad.backward(tape, logdet)[a]
        # d logdet / dA = A^{-T}; with the read-lower convention the
        # sensitivity of the identity lands on the diagonal.
        np.testing.assert_allclose(grad, np.eye(2), atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = rng.integers(2, 7)
            m = rng.standard_normal((n, n))
            a = m @ m.T + n * np.eye(n)
            tape = ad.Tape()
            factor = ad.cholesky(tape.leaf(a))
            rebuilt = factor.values @ factor.values.T
            err = np.linalg.norm(rebuilt - a) / np.linalg.norm(a)
            assert err < 1e-10

    def test_not_positive_definite_pivot(self):
        tape = ad.Tape()
        a = tape.leaf(np.diag([1.0, -1.0]))
        with pytest.raises(NotPositiveDefiniteError) as exc:
            ad.cholesky(a)
        assert exc.value.pivot_index == 1


class TestCholeskyJittered:
    def test_identity_needs_no_jitter(self):
        tape = ad.Tape()
        factor, eps = ad.cholesky_jittered(tape.leaf(np.eye(3)))
        assert eps == 0.0
        np.testing.assert_allclose(factor.values, np.eye(3))

    def test_rank_one_succeeds_on_first_entry(self):
        v = np.array([1.0, 1.0])
        tape = ad.Tape()
        node = tape.leaf(np.outer(v, v))
        factor, eps = ad.cholesky_jittered(node)
        assert eps == pytest.approx(1e-6)
        rebuilt = factor.values @ factor.values.T
        np.testing.assert_allclose(rebuilt, np.outer(v, v) + eps * np.eye(2), atol=1e-12)

    def test_negative_eigenvalue_exhausts_schedule(self):
        tape = ad.Tape()
        node = tape.leaf(np.diag([1.0, -1.0]))
        with pytest.raises(NotPositiveDefiniteError) as exc:
            ad.cholesky_jittered(node, jitter_schedule=(1e-6, 1e-3, 1e-2))
        assert exc.value.pivot_index == 1


class TestComplexPairs:
    def test_complex_exp_pair_values(self):
        tape = ad.Tape()
        a = tape.leaf(np.array([0.3, -1.0]))
        b = tape.leaf(np.array([0.7, 2.0]))
        re, im = ad.complex_exp_pair(a, b)
        expected = np.exp(a.values + 1j * b.values)
        np.testing.assert_allclose(re.values, expected.real, atol=1e-14)
        np.testing.assert_allclose(im.values, expected.imag, atol=1e-14)

    def test_complex_exp_pair_gradient(self):
        rng = np.random.default_rng(11)

        def fn(leaves):
            re, im = ad.complex_exp_pair(leaves["a"], leaves["b"])
            return ad.tensor_sum(re * 0.7 + im * 1.3)

        for _ in range(10):
            params = {"a": rng.normal(size=3), "b": rng.normal(size=3)}
            assert ad.check_gradient(fn, params, step=1e-6) < 1e-6

    def test_scan_matches_direct_recursion(self):
        rng = np.random.default_rng(5)
        a = complex(-0.2, 0.9)
        b = rng.normal(size=30) + 1j * rng.normal(size=30)
        tape = ad.Tape()
        xre, xim = ad.cumulative_scan(
            tape.leaf(a.real), tape.leaf(a.imag), tape.leaf(b.real), tape.leaf(b.imag)
        )
        expected = lfilter([1.0], [1.0, -a], b)
        state = 0.0 + 0.0j
        manual = []
        for bk in b:
            state = a * state + bk
            manual.append(state)
        np.testing.assert_allclose(expected, manual, atol=1e-12)
        np.testing.assert_allclose(xre.values + 1j * xim.values, manual, atol=1e-12)

    def test_scan_gradient(self):
        rng = np.random.default_rng(8)
        w = rng.normal(size=12)

        def fn(leaves):
            xre, xim = ad.cumulative_scan(
                leaves["ar"], leaves["ai"], leaves["br"], leaves["bi"]
            )
            return ad.tensor_sum(xre * w) + ad.tensor_sum(xim * (w[::-1]))

        params = {
            "ar": np.array(-0.3),
            "ai": np.array(0.8),
            "br": rng.normal(size=12),
            "bi": rng.normal(size=12),
        }
        assert ad.check_gradient(fn, params, step=1e-6) < 1e-6


def _spd(rng, n):
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


# One scalar-valued composite per op kind, with domain-appropriate inputs.
OP_CASES = {
    "add": (lambda r: {"x": r.normal(size=(3, 2)), "y": r.normal(size=(3, 2))},
            lambda l: ad.tensor_sum(ad.add(l["x"], l["y"]) * 1.7)),
    "sub": (lambda r: {"x": r.normal(size=4), "y": r.normal(size=4)},
            lambda l: ad.tensor_sum(ad.sub(l["x"], l["y"]) * ad.sub(l["x"], l["y"]))),
    "mul": (lambda r: {"x": r.normal(size=(2, 3)), "y": r.normal(size=3)},
            lambda l: ad.tensor_sum(ad.mul(l["x"], l["y"]))),
    "div": (lambda r: {"x": r.normal(size=4), "y": r.uniform(0.5, 2.0, size=4)},
            lambda l: ad.tensor_sum(ad.div(l["x"], l["y"]))),
    "matmul": (lambda r: {"x": r.normal(size=(2, 3)), "y": r.normal(size=(3, 2))},
               lambda l: ad.tensor_sum(ad.matmul(l["x"], l["y"]) * 0.5)),
    "transpose": (lambda r: {"x": r.normal(size=(2, 3))},
                  lambda l: ad.tensor_sum(ad.transpose(l["x"]) @ l["x"])),
    "sum": (lambda r: {"x": r.normal(size=(3, 2))},
            lambda l: ad.tensor_sum(ad.tensor_sum(l["x"], axis=0) * 2.0)),
    "exp": (lambda r: {"x": r.normal(size=3)},
            lambda l: ad.tensor_sum(ad.exp(l["x"]))),
    "log": (lambda r: {"x": r.uniform(0.2, 3.0, size=3)},
            lambda l: ad.tensor_sum(ad.log(l["x"]))),
    "softplus": (lambda r: {"x": r.normal(size=4) * 3},
                 lambda l: ad.tensor_sum(ad.softplus(l["x"]))),
    "negate": (lambda r: {"x": r.normal(size=3)},
               lambda l: ad.tensor_sum(ad.negate(l["x"]) * l["x"])),
    "concat": (lambda r: {"x": r.normal(size=2), "y": r.normal(size=3)},
               lambda l: ad.tensor_sum(ad.concat([l["x"], l["y"]]) * np.arange(5.0))),
    "slice": (lambda r: {"x": r.normal(size=(4, 3))},
              lambda l: ad.tensor_sum(ad.take(l["x"], (np.array([0, 2, 2]), np.array([1, 0, 0]))))),
    "reshape": (lambda r: {"x": r.normal(size=6)},
                lambda l: ad.tensor_sum(ad.reshape(l["x"], (2, 3)) * np.arange(6.0).reshape(2, 3))),
    "sqrt": (lambda r: {"x": r.uniform(0.1, 4.0, size=3)},
             lambda l: ad.tensor_sum(ad.sqrt(l["x"]))),
    "clamp_min": (lambda r: {"x": r.normal(size=5) + 2.0},
                  lambda l: ad.tensor_sum(ad.clamp_min(l["x"], 0.0) * l["x"])),
    "cholesky": (lambda r: {"x": _spd(r, 3)},
                 lambda l: ad.tensor_sum(ad.cholesky(l["x"]) * r_weights(3))),
    "triangular_solve": (
        lambda r: {"a": np.tril(r.normal(size=(3, 3))) + 3 * np.eye(3), "b": r.normal(size=(3, 2))},
        lambda l: ad.tensor_sum(ad.triangular_solve(l["a"], l["b"]) * 0.7),
    ),
    "complex_exp_pair": (
        lambda r: {"a": r.normal(size=3), "b": r.normal(size=3)},
        lambda l: (lambda re, im: ad.tensor_sum(re) + ad.tensor_sum(im * 0.4))(
            *ad.complex_exp_pair(l["a"], l["b"])
        ),
    ),
    "cumulative_scan": (
        lambda r: {"ar": np.array(r.uniform(-0.9, -0.1)), "ai": np.array(r.normal()),
                   "br": r.normal(size=6), "bi": r.normal(size=6)},
        lambda l: (lambda re, im: ad.tensor_sum(re * np.arange(6.0)) + ad.tensor_sum(im))(
            *ad.cumulative_scan(l["ar"], l["ai"], l["br"], l["bi"])
        ),
    ),
}


def r_weights(n):
    return np.linspace(0.5, 1.5, n * n).reshape(n, n)


@pytest.mark.parametrize("kind", sorted(OP_CASES))
def test_chain_rule_soundness(kind):
    """Every op kind: AD vs central differences < 1e-4 at 100 random points."""
    sampler, builder = OP_CASES[kind]
    rng = np.random.default_rng(hash(kind) % (2**32))
    worst = 0.0
    for _ in range(100):
        params = sampler(rng)
        worst = max(worst, ad.check_gradient(builder, params, step=1e-6))
    assert worst < 1e-4, f"{kind}: worst relative error {worst}"


def test_all_spec_kinds_registered():
    required = {
        "add", "sub", "mul", "div", "matmul", "transpose", "sum", "exp", "log",
        "softplus", "negate", "concat", "slice", "cholesky", "triangular_solve",
        "complex_exp_pair", "cumulative_scan",
    }
    assert required <= set(ad.OP_KINDS)


def test_five_leaf_composite_gradient():
    """Random five-leaf composite touching every op kind stays under 1e-4."""
    rng = np.random.default_rng(21)

    def _spd_from(m):
        mt = ad.transpose(m)
        return ad.matmul(m, mt) + np.eye(3) * 2.0

    def fn(l):
        k = _spd_from(l["m"])
        factor = ad.cholesky(k)
        sol = ad.triangular_solve(factor, l["v"])
        quad = ad.tensor_sum(sol * sol)
        re, im = ad.complex_exp_pair(l["a"], l["b"])
        trig = ad.tensor_sum(re * im)
        xre, xim = ad.cumulative_scan(
            ad.negate(ad.softplus(l["w"][0])), l["w"][1], re, im
        )
        mix = ad.concat([xre[slice(0, 2)], ad.reshape(xim, (3,))[np.array([2, 0])]])
        scanned = ad.tensor_sum(mix * np.arange(4.0))
        lin = ad.tensor_sum(ad.sqrt(ad.clamp_min(ad.exp(l["w"]) - 0.5, 0.1)) * l["v"])
        return ad.log(quad + 1.0) + trig + lin - quad / 7.0 + scanned - ad.tensor_sum(ad.sub(l["a"], l["b"]))

    for _ in range(5):
        params = {
            "m": rng.normal(size=(3, 3)),
            "v": rng.normal(size=3),
            "a": rng.normal(size=3),
            "b": rng.normal(size=3),
            "w": rng.normal(size=3),
        }
        assert ad.check_gradient(fn, params, step=1e-6) < 1e-4


class TestCheckGradient:
    def test_cubic(self):
        def fn(l):
            x = l["x"]
            return x * x * x

        assert ad.check_gradient(fn, {"x": np.array(2.0)}, step=1e-5) < 1e-8

    def test_nonfinite_raises(self):
        def fn(l):
            return ad.div(1.0 + 0.0 * l["x"], l["x"] - l["x"] + 1e-300) * 1e300

        with pytest.raises(DomainError):
            ad.check_gradient(fn, {"x": np.array(1.0)}, step=1e-5)


def test_forward_determinism():
    def run():
        tape = ad.Tape()
        x = tape.leaf(np.linspace(-1, 1, 7))
        y = ad.tensor_sum(ad.exp(x) * ad.softplus(x) / 3.0)
        g = ad.backward(tape, y)[x]
        return y.values.copy(), g

    v1, g1 = run()
    v2, g2 = run()
    assert np.array_equal(v1, v2)
    assert np.array_equal(g1, g2)
