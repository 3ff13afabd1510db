"""Differentiable layers: linear, layer norm, softmax, GeLU, conv, attention, blocks."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import erf

from .tensor import Param, Tensor, _make, as_tensor, matmul, reshape, transpose

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    pass


def linear(x, w: Tensor, b: Tensor | None = None) -> Tensor:
    x = as_tensor(x)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")
    if b is None:
        return _make(
            x.data @ w.data,
            (x, w),
            lambda g: (
                g @ w.data.T,
                x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, w.shape[1]),
            ),
        )
    if b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias {b.shape} does not match weight {w.shape}")
    return _make(
        x.data @ w.data + b.data,
        (x, w, b),
        lambda g: (
            g @ w.data.T,
            x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, w.shape[1]),
            g.reshape(-1, w.shape[1]).sum(axis=0),
        ),
    )


def layer_norm(x, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize over the last axis (population variance), then scale and shift."""
    x = as_tensor(x)
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gx_hat = g * gamma.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True) - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, d)
        return gx, (flat * xhat.reshape(-1, d)).sum(axis=0), flat.sum(axis=0)

    return _make(out, (x, gamma, beta), backward)


def softmax(x, mask: np.ndarray | None = None) -> Tensor:
    """Max-subtracted softmax over the last axis. ``mask`` False entries get probability 0."""
    x = as_tensor(x)
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _make(p, (x,), backward)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _make(out, (x,), backward)


def gelu(x) -> Tensor:
    """Exact GeLU, x * Phi(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * (1.0 / SQRT2)))

    def backward(g):
        pdf = INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _make(x.data * cdf, (x,), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.data > 0
    return _make(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,))


def conv2d_nhwc(x, k: Tensor, stride: int = 2, padding: int = 1) -> Tensor:
    """Cross-correlation of channels-last ``x`` [..., H, W, C_in] with ``k`` [C_out, C_in, kh, kw].

    No bias. Output is [..., H_o, W_o, C_out].
    """
    x = as_tensor(x)
    if x.ndim < 3:
        raise ShapeError(f"conv2d: input must be [..., H, W, C], got {x.shape}")
    c_out, c_in, kh, kw = k.shape
    if x.shape[-1] != c_in:
        raise ShapeError(f"conv2d: input channels {x.shape} do not match kernel {k.shape}")
    lead = x.shape[:-3]
    H, W = x.shape[-3:-1]
    xb = x.data.reshape((-1, H, W, c_in))
    B = xb.shape[0]
    xp = np.pad(xb, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    sb, sh, sw, sc = xp.strides
    windows = as_strided(xp, (B, Ho, Wo, kh, kw, c_in), (sb, stride * sh, stride * sw, sh, sw, sc), writeable=False)
    cols2 = np.ascontiguousarray(windows).reshape(B * Ho * Wo, kh * kw * c_in)
    kmat = k.data.transpose(2, 3, 1, 0).reshape(-1, c_out)
    out = cols2 @ kmat

    def backward(g):
        gb = g.reshape(-1, c_out)
        gk = (cols2.T @ gb).reshape(kh, kw, c_in, c_out).transpose(3, 2, 0, 1)
        if not x.requires_grad:
            return None, gk
        gcols = (gb @ kmat.T).reshape(B, Ho, Wo, kh, kw, c_in)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride, :] += gcols[:, :, :, i, j, :]
        gx = gxp[:, padding:padding + H, padding:padding + W, :].reshape(x.shape)
        return gx, gk

    return _make(out.reshape(lead + (Ho, Wo, c_out)), (x, k), backward)


def conv2d(x, k: Tensor, stride: int = 2, padding: int = 1) -> Tensor:
    """Cross-correlation of ``x`` [..., C_in, H, W] with ``k`` [C_out, C_in, kh, kw], no bias."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise ShapeError(f"conv2d: input must be [..., C, H, W], got {x.shape}")
    n = x.ndim
    lead = tuple(range(n - 3))
    y = conv2d_nhwc(transpose(x, lead + (n - 2, n - 1, n - 3)), k, stride, padding)
    return transpose(y, lead + (n - 1, n - 3, n - 2))


def cross_entropy_weighted(logits, targets, weights, floor: float = 1e-12) -> Tensor:
    """-sum_t w_t log p_t[a_t] with p = softmax(logits) and log floored at ``floor``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(logp)
    rows = np.arange(len(targets))
    lp = logp[rows, targets]
    floored = lp < math.log(floor)
    lp_used = np.where(floored, math.log(floor), lp)
    loss = -(weights * lp_used).sum()

    def backward(g):
        gl = p.copy()
        gl[rows, targets] -= 1.0
        gl *= (weights * ~floored)[:, None]
        return (g * gl,)

    return _make(np.asarray(loss), (logits,), backward)


# -- attention ----------------------------------------------------------------------------


class AttnParams:
    def __init__(self, w_q: Param, w_k: Param, w_v: Param, w_o: Param):
        self.w_q, self.w_k, self.w_v, self.w_o = w_q, w_k, w_v, w_o


def attention_weights(x: Tensor, p: AttnParams, heads: int, key_mask: np.ndarray | None = None) -> Tensor:
    """Per-head attention matrices [..., h, T, T]."""
    q, k, _ = _qkv(x, p, heads)
    return _scores(q, k, key_mask, x.shape[-1] // heads)


def _split_heads(t: Tensor, heads: int) -> Tensor:
    *lead, T, D = t.shape
    t = reshape(t, tuple(lead) + (T, heads, D // heads))
    nl = len(lead)
    return transpose(t, tuple(range(nl)) + (nl + 1, nl, nl + 2))


def _qkv(x, p, heads):
    return (
        _split_heads(linear(x, p.w_q), heads),
        _split_heads(linear(x, p.w_k), heads),
        _split_heads(linear(x, p.w_v), heads),
    )


def _scores(q, k, key_mask, d_h):
    nl = q.ndim
    kt = transpose(k, tuple(range(nl - 2)) + (nl - 1, nl - 2))
    s = matmul(q, kt) * (1.0 / math.sqrt(d_h))
    mask = None
    if key_mask is not None:
        # key_mask [..., T] -> [..., 1, 1, T]
        mask = np.asarray(key_mask, dtype=bool)[..., None, None, :]
        mask = np.broadcast_to(mask, s.shape)
    return softmax(s, mask)


def mhsa(x, p: AttnParams, heads: int, key_mask: np.ndarray | None = None) -> Tensor:
    """Multi-head self-attention: per-head softmax(QK^T/sqrt(d_h))V, concatenated, then W^O."""
    x = as_tensor(x)
    D = x.shape[-1]
    if D % heads != 0:
        raise ShapeError(f"model width {D} is not divisible by {heads} heads")
    q, k, v = _qkv(x, p, heads)
    a = _scores(q, k, key_mask, D // heads)
    h = matmul(a, v)  # [..., heads, T, d_h]
    nl = h.ndim
    h = transpose(h, tuple(range(nl - 3)) + (nl - 2, nl - 3, nl - 1))
    h = reshape(h, h.shape[:-2] + (D,))
    return linear(h, p.w_o)


class BlockParams:
    def __init__(self, attn: AttnParams, ln1: tuple, w_f1: Param, w_f2: Param, ln2: tuple):
        self.attn, self.ln1, self.w_f1, self.w_f2, self.ln2 = attn, ln1, w_f1, w_f2, ln2


def transformer_block(x, p: BlockParams, heads: int, key_mask: np.ndarray | None = None) -> Tensor:
    """Post-norm block: H' = LN(MHSA(X) + X); X' = GeLU(H' W1) W2; out = LN(H' + X')."""
    x = as_tensor(x)
    h = layer_norm(mhsa(x, p.attn, heads, key_mask) + x, *p.ln1)
    f = linear(gelu(linear(h, p.w_f1)), p.w_f2)
    return layer_norm(h + f, *p.ln2)
