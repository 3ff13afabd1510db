import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from signnav.nn import (
    AttnParams,
    BlockParams,
    CheckpointError,
    Param,
    ShapeError,
    Tensor,
    attention_weights,
    concat,
    conv2d,
    conv2d_nhwc,
    cross_entropy_weighted,
    dump_params,
    gelu,
    grad_check,
    layer_norm,
    linear,
    load_into,
    mhsa,
    no_grad,
    relu,
    softmax,
    take_rows,
    transformer_block,
)

RNG = np.random.default_rng(1234)


def P(shape, name="p", scale=1.0, rng=RNG):
    return Param(rng.normal(size=shape) * scale, name)


def proj(out, seed=0):
    """Fixed random readout so vector outputs become scalar losses."""
    c = np.random.default_rng(seed).normal(size=out.shape)
    return (out * Tensor(c)).sum()


def attn_params(D, rng=RNG, scale=0.4):
    return AttnParams(*(P((D, D), n, scale, rng) for n in ("q", "k", "v", "o")))


def block_params(D, F, rng=RNG):
    ln = lambda n: (Param(1 + 0.1 * rng.normal(size=D), n + ".g"), Param(0.1 * rng.normal(size=D), n + ".b"))
    return BlockParams(attn_params(D, rng), ln("ln1"), P((D, F), "f1", 0.3, rng), P((F, D), "f2", 0.3, rng), ln("ln2"))


def block_param_list(bp):
    a = bp.attn
    return [a.w_q, a.w_k, a.w_v, a.w_o, *bp.ln1, bp.w_f1, bp.w_f2, *bp.ln2]


# -- linear -----------------------------------------------------------------------------------


def test_linear_identity():
    x = np.array([[1.0, 2.0, 3.0]])
    out = linear(x, Param(np.eye(3), "w"), Param(np.zeros(3), "b"))
    assert np.array_equal(out.data, x)


def test_linear_hand_arithmetic():
    w = Param([[1.0, 2.0], [3.0, 4.0]], "w")
    b = Param([0.5, -0.5], "b")
    out = linear(np.array([1.0, 2.0]), w, b)
    # [1*1 + 2*3, 1*2 + 2*4] + b
    assert out.data.tolist() == [7.5, 9.5]
    out = linear(np.array([1.0, 2.0]), Param(np.array([[1.0, 2.0], [3.0, 4.0]]).T, "wt"))
    assert out.data.tolist() == [5.0, 11.0]


def test_linear_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        linear(np.zeros((2, 3)), Param(np.zeros((4, 2)), "w"))


def test_linear_gradcheck():
    x = P((3, 4), "x")
    w, b = P((4, 5), "w"), P((5,), "b")
    assert grad_check(lambda: proj(linear(x, w, b)), [x, w, b]) <= 1e-6


# -- layer norm -----------------------------------------------------------------------------


def test_layer_norm_constant_input_is_zero():
    out = layer_norm(np.full((2, 5), 3.7), Param(np.ones(5), "g"), Param(np.zeros(5), "b"))
    assert np.array_equal(out.data, np.zeros((2, 5)))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 7), elements=st.floats(-100, 100)))
def test_layer_norm_standardizes(x):
    if np.ptp(x, axis=-1).min() < 1e-3:
        return
    out = layer_norm(x, Param(np.ones(7), "g"), Param(np.zeros(7), "b"), eps=0.0).data
    assert np.allclose(out.mean(-1), 0.0, atol=1e-9)
    assert np.allclose(out.var(-1), 1.0, atol=1e-9)


def test_layer_norm_gradcheck():
    x = P((4, 6), "x", 2.0)
    g, b = Param(1 + 0.2 * RNG.normal(size=6), "g"), P((6,), "b")
    assert grad_check(lambda: proj(layer_norm(x, g, b)), [x, g, b]) <= 1e-5


# -- softmax / gelu ---------------------------------------------------------------------------


def test_softmax_closed_forms():
    assert np.allclose(softmax(np.array([0.0, 0.0])).data, [0.5, 0.5], atol=0, rtol=0)
    assert np.allclose(softmax(np.array([math.log(2.0), 0.0])).data, [2 / 3, 1 / 3], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 6), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_shift_invariance_and_normalization(x, c):
    p = softmax(x).data
    assert np.allclose(softmax(x + c).data, p, atol=1e-12)
    assert np.all(p > 0)
    assert np.allclose(p.sum(-1), 1.0, atol=1e-9)


def test_softmax_mask_zeroes_entries():
    p = softmax(np.array([1.0, 5.0, 2.0]), mask=np.array([True, False, True])).data
    assert p[1] == 0.0 and abs(p.sum() - 1.0) < 1e-15


def test_softmax_gradcheck():
    x = P((3, 5), "x")
    assert grad_check(lambda: proj(softmax(x)), [x]) <= 1e-6


def test_gelu_values():
    assert gelu(np.array(0.0)).data == 0.0
    # Phi(1) = 0.5 * (1 + erf(1/sqrt 2))
    assert abs(float(gelu(np.array(1.0)).data) - 0.5 * (1 + math.erf(1 / math.sqrt(2)))) < 1e-15
    assert abs(float(gelu(np.array(1.0)).data) - 0.841345) < 1e-6
    assert abs(float(gelu(np.array(10.0)).data) - 10.0) < 1e-9


def test_gelu_and_relu_gradcheck():
    x = P((20,), "x", 2.0)
    assert grad_check(lambda: proj(gelu(x)), [x]) <= 1e-6
    y = Param(RNG.uniform(0.1, 1.0, size=10) * RNG.choice([-1, 1], size=10), "y")
    assert grad_check(lambda: proj(relu(y)), [y]) <= 1e-6


# -- conv -----------------------------------------------------------------------------------


def test_conv_zero_input_gives_zero():
    out = conv2d(np.zeros((2, 9, 7)), P((3, 2, 3, 3), "k"))
    assert out.shape == (3, 5, 4)
    assert np.array_equal(out.data, np.zeros((3, 5, 4)))


def test_conv_single_tap_subsamples():
    x = np.arange(16.0).reshape(1, 4, 4)
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0  # centre tap: output (i, j) reads input (2i, 2j)
    out = conv2d(x, Param(k, "k")).data
    assert out.tolist() == [[[0.0, 2.0], [8.0, 10.0]]]


def naive_conv(x, k, stride=2, pad=1):
    cin, H, W = x.shape
    cout = k.shape[0]
    xp = np.zeros((cin, H + 2 * pad, W + 2 * pad))
    xp[:, pad:pad + H, pad:pad + W] = x
    Ho, Wo = (H + 2 * pad - 3) // stride + 1, (W + 2 * pad - 3) // stride + 1
    out = np.zeros((cout, Ho, Wo))
    for o in range(cout):
        for i in range(Ho):
            for j in range(Wo):
                out[o, i, j] = (xp[:, i * stride:i * stride + 3, j * stride:j * stride + 3] * k[o]).sum()
    return out


@pytest.mark.parametrize("shape", [(2, 6, 6), (3, 7, 5), (1, 1, 1)])
def test_conv_matches_naive_loop(shape):
    x = RNG.normal(size=shape)
    k = RNG.normal(size=(4, shape[0], 3, 3))
    assert np.allclose(conv2d(x, Param(k, "k")).data, naive_conv(x, k), atol=1e-12)


def test_conv_batched_and_nhwc_agree():
    x = RNG.normal(size=(3, 2, 8, 8))
    k = Param(RNG.normal(size=(5, 2, 3, 3)), "k")
    a = conv2d(x, k).data
    b = conv2d_nhwc(x.transpose(0, 2, 3, 1), k).data.transpose(0, 3, 1, 2)
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(a[1], naive_conv(x[1], k.data), atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d(np.zeros((3, 4, 4)), P((2, 2, 3, 3), "k"))


def test_conv_gradcheck():
    x = P((2, 6, 6), "x")
    k = P((3, 2, 3, 3), "k")
    assert grad_check(lambda: proj(conv2d(x, k)), [x, k]) <= 1e-5


# -- attention ------------------------------------------------------------------------------


def naive_mhsa(x, p: AttnParams, h):
    T, D = x.shape
    dh = D // h
    heads = []
    for k in range(h):
        cols = slice(k * dh, (k + 1) * dh)
        q = x @ p.w_q.data[:, cols]
        kk = x @ p.w_k.data[:, cols]
        v = x @ p.w_v.data[:, cols]
        out = np.zeros((T, dh))
        for i in range(T):
            s = np.array([sum(q[i, d] * kk[j, d] for d in range(dh)) / math.sqrt(dh) for j in range(T)])
            e = np.exp(s - s.max())
            a = e / e.sum()
            for j in range(T):
                out[i] += a[j] * v[j]
        heads.append(out)
    return np.concatenate(heads, axis=1) @ p.w_o.data


def test_mhsa_matches_naive_reference():
    rng = np.random.default_rng(7)
    p = attn_params(8, rng)
    x = rng.normal(size=(4, 8))
    assert np.abs(mhsa(x, p, 2).data - naive_mhsa(x, p, 2)).max() <= 1e-12


def test_mhsa_single_token():
    p = attn_params(6)
    x = RNG.normal(size=(1, 6))
    a = attention_weights(Tensor(x), p, 3).data
    assert np.array_equal(a, np.ones((3, 1, 1)))
    assert np.allclose(mhsa(x, p, 3).data, (x @ p.w_v.data) @ p.w_o.data, atol=1e-14)


def test_attention_rows_sum_to_one():
    p = attn_params(8)
    a = attention_weights(Tensor(RNG.normal(size=(5, 8))), p, 2).data
    assert np.abs(a.sum(-1) - 1.0).max() <= 1e-9


def test_mhsa_divisibility_error():
    with pytest.raises(ShapeError, match="divisible"):
        mhsa(np.zeros((2, 6)), attn_params(6), 4)


def test_key_mask_equals_truncated_sequence():
    rng = np.random.default_rng(3)
    bp = block_params(8, 16, rng)
    x = rng.normal(size=(5, 8))
    mask = np.array([True, False, False, True, True])
    full = transformer_block(x, bp, 2, mask).data
    short = transformer_block(x[mask], bp, 2).data
    assert np.abs(full[mask] - short).max() <= 1e-12


def test_mhsa_gradcheck_with_mask():
    x = P((2, 4, 8), "x")
    p = attn_params(8)
    mask = np.array([[True, True, True, True], [False, True, False, True]])
    assert grad_check(lambda: proj(mhsa(x, p, 2, mask)), [x, p.w_q, p.w_k, p.w_v, p.w_o]) <= 1e-5


@pytest.mark.parametrize("T", [1, 4, 9])
def test_block_preserves_shape(T):
    bp = block_params(8, 16)
    assert transformer_block(RNG.normal(size=(T, 8)), bp, 2).shape == (T, 8)


def test_block_with_zero_ffn_is_double_norm():
    bp = block_params(8, 16)
    bp.w_f1.data[:] = 0.0
    bp.w_f2.data[:] = 0.0
    x = RNG.normal(size=(3, 8))
    h = layer_norm(mhsa(x, bp.attn, 2) + Tensor(x), *bp.ln1)
    assert np.allclose(transformer_block(x, bp, 2).data, layer_norm(h, *bp.ln2).data, atol=1e-14)


def test_block_gradcheck():
    bp = block_params(8, 16)
    x = P((3, 8), "x")
    assert grad_check(lambda: proj(transformer_block(x, bp, 2)), [x, *block_param_list(bp)]) <= 1e-4


# -- structural ops / loss --------------------------------------------------------------------


def test_take_rows_and_concat_gradcheck():
    table = P((5, 3), "t")
    other = P((2, 3), "o")
    idx = np.array([[0, 4, 4], [2, 0, 1]])
    assert grad_check(lambda: proj(concat([take_rows(table, idx).reshape(6, 3), other], axis=0)), [table, other]) <= 1e-6


def test_weighted_cross_entropy_gradcheck_and_floor():
    lg = P((6, 4), "l")
    t = [0, 1, 2, 3, 1, 0]
    w = RNG.uniform(0.5, 2.0, size=6)
    assert grad_check(lambda: cross_entropy_weighted(lg, t, w), [lg]) <= 1e-6
    big = np.array([[0.0, 1000.0, 0.0, 0.0]])
    assert float(cross_entropy_weighted(big, [0], [1.0]).data) == pytest.approx(-math.log(1e-12))


def test_no_grad_records_nothing():
    w = P((3, 3), "w")
    with no_grad():
        out = linear(np.ones((1, 3)), w)
    assert not out.requires_grad and out._parents == ()


def test_backward_visits_shared_nodes_once():
    x = Param(np.array([2.0]), "x")
    y = x * x
    z = y + y  # d z / d x = 4x
    z.sum().backward()
    assert x.grad.tolist() == [8.0]


# -- grad_check itself ----------------------------------------------------------------------


def test_grad_check_linear_regression_toy():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(20, 3)), rng.normal(size=(20, 1))
    w = Param(rng.normal(size=(3, 1)), "w")

    def f():
        r = linear(X, w) - Tensor(y)
        return (r * r).mean()

    assert grad_check(f, [w]) <= 1e-7


def test_grad_check_detects_corrupted_gradient():
    w = Param(np.array([1.5, -0.7]), "w")

    def f():
        out = (w * w).sum()
        orig = out._backward
        out._backward = lambda g: tuple(2.0 * v for v in orig(g))
        return out

    err = grad_check(f, [w])
    # |2a - a| / (|2a| + |a|) = 1/3
    assert err > 0.1 and abs(err - 1 / 3) < 1e-6


def test_grad_check_empty_parameter_list():
    assert grad_check(lambda: Tensor(np.array(1.0)), []) == 0.0


# -- checkpoint -----------------------------------------------------------------------------


def test_checkpoint_round_trip_is_byte_exact():
    params = [P((3, 4), "a"), P((7,), "b"), Param(np.array([np.pi, -0.0, 1e-300]), "c")]
    blob = dump_params(params, "abc123", {"k": 1})
    fresh = [Param(np.zeros_like(p.data), p.name) for p in params]
    header = load_into(fresh, blob, "abc123")
    assert header["param_count"] == 3
    assert dump_params(fresh, "abc123", {"k": 1}) == blob
    for p, q in zip(params, fresh):
        assert p.data.tobytes() == q.data.tobytes()


def test_checkpoint_rejects_hash_and_shape_mismatch():
    params = [P((2, 2), "a")]
    blob = dump_params(params, "h1")
    with pytest.raises(CheckpointError, match="hash"):
        load_into(params, blob, "h2")
    with pytest.raises(CheckpointError, match="shape"):
        load_into([Param(np.zeros(3), "a")], blob)
    with pytest.raises(CheckpointError, match="truncated"):
        load_into(params, blob[:-3])
