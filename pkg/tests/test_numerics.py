import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from groundcot import numerics as nx
from groundcot.numerics import ShapeError, Tape, UsageError

import oracles

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matrix_validates():
    m = nx.matrix([1, 2, 3, 4, 5, 6], 2, 3)
    assert m.shape == (2, 3)
    assert not m.flags.writeable
    with pytest.raises(ShapeError):
        nx.matrix([1, 2, 3], 2, 2)
    with pytest.raises(ValueError):
        nx.matrix([[1.0, np.nan]])
    with pytest.raises(ValueError):
        nx.matrix([[np.inf]])


# ---------------------------------------------------------------- matmul


def test_matmul_identity_and_annihilator():
    eye = np.eye(2)
    assert np.array_equal(nx.matmul(eye, eye), eye)
    assert np.array_equal(nx.matmul([[1, 2], [3, 4]], np.zeros((2, 2))), np.zeros((2, 2)))


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((3, 2)), rng.standard_normal((2, 4))
    np.testing.assert_allclose(nx.matmul(a, b), oracles.matmul_loops(a.tolist(), b.tolist()), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nx.matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
def test_matmul_associative(n, k, m, p, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.standard_normal((n, k)), rng.standard_normal((k, m)), rng.standard_normal((m, p))
    left = nx.matmul(nx.matmul(a, b), c)
    right = nx.matmul(a, nx.matmul(b, c))
    np.testing.assert_allclose(left, right, rtol=1e-9, atol=1e-12)


# ---------------------------------------------------------------- softmax


def test_softmax_examples():
    np.testing.assert_allclose(nx.softmax_rows([[0.0, 0.0, 0.0]]), [[1 / 3] * 3], rtol=0, atol=1e-15)
    big = nx.softmax_rows([[1000.0, 0.0]])
    assert np.all(np.isfinite(big))
    assert big[0, 0] == pytest.approx(1.0) and big[0, 1] == pytest.approx(0.0, abs=1e-300)
    # frozen from 40-digit mpmath exp/sum
    np.testing.assert_allclose(
        nx.softmax_rows([[1.0, 2.0, 3.0]]),
        [[0.09003057317038046, 0.24472847105479764, 0.6652409557748219]],
        rtol=0,
        atol=1e-15,
    )
    assert oracles.softmax_mp([1, 2, 3]) == pytest.approx(
        [0.09003057317038046, 0.24472847105479764, 0.6652409557748219], abs=1e-16
    )


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_softmax_rows_are_distributions(m):
    y = nx.softmax_rows(m)
    assert np.all(y >= 0) and np.all(y <= 1)
    np.testing.assert_allclose(y.sum(axis=1), 1.0, rtol=0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite), finite)
def test_softmax_shift_invariant(m, c):
    np.testing.assert_allclose(nx.softmax_rows(m + c), nx.softmax_rows(m), rtol=0, atol=1e-12)


def test_softmax_empty_rejected():
    with pytest.raises(ShapeError):
        nx.softmax_rows(np.zeros((0, 3)))


# ---------------------------------------------------------------- mlp2


def _gelu(x):
    return np.vectorize(oracles.gelu_scalar)(x)


def test_mlp2_zero_input_is_forced():
    rng = np.random.default_rng(0)
    w1, b1 = rng.standard_normal((3, 5)), rng.standard_normal(5)
    w2, b2 = rng.standard_normal((5, 2)), rng.standard_normal(2)
    out = nx.mlp2(np.zeros((4, 3)), w1, b1, w2, b2)
    expected = _gelu(b1) @ w2 + b2
    np.testing.assert_allclose(out, np.tile(expected, (4, 1)), rtol=0, atol=1e-14)


def test_mlp2_zero_weights_gives_bias():
    rng = np.random.default_rng(1)
    b1, b2 = rng.standard_normal(5), rng.standard_normal(2)
    out = nx.mlp2(rng.standard_normal((3, 3)), np.zeros((3, 5)), b1, np.zeros((5, 2)), b2)
    np.testing.assert_array_equal(out, np.tile(b2, (3, 1)))


def test_mlp2_matches_straight_line():
    rng = np.random.default_rng(2)
    x, w1, b1 = rng.standard_normal((4, 3)), rng.standard_normal((3, 6)), rng.standard_normal(6)
    w2, b2 = rng.standard_normal((6, 2)), rng.standard_normal(2)
    expected = oracles.mlp2_straight(x.tolist(), w1.tolist(), b1.tolist(), w2.tolist(), b2.tolist())
    np.testing.assert_allclose(nx.mlp2(x, w1, b1, w2, b2), expected, rtol=1e-12, atol=1e-12)


def test_mlp2_shape_error():
    with pytest.raises(ShapeError):
        nx.mlp2(np.ones((2, 3)), np.ones((3, 4)), np.ones(5), np.ones((4, 2)), np.ones(2))
    with pytest.raises(ShapeError):
        nx.mlp2(np.ones((2, 2)), np.ones((3, 4)), np.ones(4), np.ones((4, 2)), np.ones(2))


# ---------------------------------------------------------------- tape


def test_tape_replays_in_reverse_order():
    tape = Tape()
    x = tape.variable(np.ones((2, 2)))
    y = nx.matmul(x, x)
    z = nx.softmax_rows(y)
    loss = nx.total(z * 3.0)
    tape.gradient(loss, [x])
    assert tape.op_names == ["matmul", "softmax_rows", "mul", "sum"]
    assert tape.backward_order == [3, 2, 1, 0]


def test_gradient_of_unrecorded_value_is_usage_error():
    tape, other = Tape(), Tape()
    x = tape.variable(np.ones(3))
    loss = nx.total(x)
    with pytest.raises(UsageError):
        tape.gradient(loss, [other.variable(np.ones(3))])
    with pytest.raises(UsageError):
        tape.gradient(np.float64(1.0), [x])
    with pytest.raises(UsageError):
        other.gradient(loss, [x])
    with pytest.raises(UsageError):
        tape.gradient(x * 2.0, [x])  # not scalar


def test_mixing_tapes_rejected():
    a, b = Tape().variable(np.ones((1, 1))), Tape().variable(np.ones((1, 1)))
    with pytest.raises(UsageError):
        nx.add(a, b)


def test_plain_arrays_do_not_record():
    out = nx.softmax_rows(nx.matmul(np.eye(2), np.eye(2)))
    assert isinstance(out, np.ndarray)


def test_unused_parameter_gets_zero_gradient():
    _, g = nx.grad(lambda p: nx.total(p["a"]), {"a": np.ones(2), "b": np.ones(3)})
    assert np.array_equal(g["b"], np.zeros(3))


def test_broadcast_bias_gradient_sums_rows():
    _, g = nx.grad(lambda p: nx.total(nx.add(p["x"], p["b"])), {"x": np.ones((4, 3)), "b": np.zeros((1, 3))})
    np.testing.assert_array_equal(g["b"], [[4.0, 4.0, 4.0]])


# ---------------------------------------------------------------- check_gradient


def test_check_gradient_sum_is_exact():
    # at the origin x +/- eps is exact, so the difference quotient is exactly 1
    assert nx.check_gradient(nx.total, np.zeros(5)) == 0.0
    # elsewhere only the difference quotient's rounding remains
    assert nx.check_gradient(nx.total, np.random.default_rng(0).standard_normal(5)) <= 1e-10
    _, g = nx.grad(lambda p: nx.total(p["x"]), {"x": np.random.default_rng(0).standard_normal(5)})
    assert np.array_equal(g["x"], np.ones(5))


def test_check_gradient_quadratic():
    x = np.random.default_rng(1).standard_normal((6, 1))
    err = nx.check_gradient(lambda v: nx.total(nx.matmul(nx.transpose(v), v)), x, eps=1e-5)
    assert err <= 1e-6
    _, g = nx.grad(lambda p: nx.total(nx.matmul(nx.transpose(p["x"]), p["x"])), {"x": x})
    np.testing.assert_allclose(g["x"], 2 * x, rtol=1e-14)


def test_check_gradient_softmax_cross_entropy():
    rng = np.random.default_rng(2)
    at = {"w": rng.standard_normal((4, 3)), "x": rng.standard_normal((5, 4))}
    targets = [0, 2, 1, 1, 0]
    err = nx.check_gradient(lambda p: nx.cross_entropy(nx.matmul(p["x"], p["w"]), targets), at, eps=1e-5)
    assert err <= 1e-4


def test_cross_entropy_matches_extended_precision():
    rng = np.random.default_rng(4)
    logits = rng.standard_normal((6, 4)) * 3
    targets = rng.integers(0, 4, 6)
    assert float(nx.cross_entropy(logits, targets)) == pytest.approx(
        oracles.cross_entropy_mp(logits.tolist(), targets.tolist()), abs=1e-13
    )


def test_check_gradient_rejects_bad_eps():
    with pytest.raises(UsageError):
        nx.check_gradient(nx.total, np.ones(2), eps=0)


@pytest.mark.parametrize("seed", range(10))
def test_composite_gradients(seed):
    rng = np.random.default_rng(seed)
    at = {
        "x": rng.standard_normal((2, 3, 4)),
        "w": rng.standard_normal((4, 4)),
        "g": rng.standard_normal((1, 4)),
        "b": rng.standard_normal((1, 4)),
        "r": rng.standard_normal((4, 4)),
    }
    idx = np.array([[0, 2], [1, 1]])

    def f(p):
        h = nx.layer_norm(nx.matmul(p["x"], p["w"]), p["g"], p["b"])
        a = nx.softmax_rows(nx.matmul(h, nx.transpose(h)))
        y = nx.gelu(nx.matmul(a, h))
        y = nx.concat_cols([nx.take_cols(y, 0, 2), nx.take_cols(y, 2, 4) * 0.5])
        y = nx.concat_rows([nx.gather_rows(y, idx), y])
        return nx.total(nx.mul(nx.matmul(nx.mean_rows(y), p["r"]), nx.mean_rows(y)))

    assert nx.check_gradient(f, at, eps=1e-5) <= 1e-4
