"""Transformer building blocks with explicit backward passes.

All math runs in float64. Forward helpers return (output, cache); the matching
backward takes (d_output, cache) and returns input gradients plus parameter
gradients keyed by the same names the forward read. Blocks are pre-norm
residual: x + attn(ln1(x)) followed by x + mlp(ln2(x)), GELU inside the MLP,
feed-forward expansion x4.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import erf

from .errors import NumericError

Params = dict[str, np.ndarray]
Grads = dict[str, np.ndarray]

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))
_LN_EPS = 1e-5


def accumulate(dst: Grads, src: Grads) -> None:
    for k, v in src.items():
        if k in dst:
            dst[k] = dst[k] + v
        else:
            dst[k] = v


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def linear_forward(x, w, b):
    return x @ w + b, (x, w)


def linear_backward(dy, cache):
    x, w = cache
    dx = dy @ w.T
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dx, x2.T @ dy2, dy2.sum(axis=0)


def layernorm_forward(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return gamma * xhat + beta, (xhat, inv, gamma)


def layernorm_backward(dy, cache):
    xhat, inv, gamma = cache
    dim = xhat.shape[-1]
    dgamma = (dy * xhat).reshape(-1, dim).sum(axis=0)
    dbeta = dy.reshape(-1, dim).sum(axis=0)
    dxhat = dy * gamma
    dx = (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    ) * inv
    return dx, dgamma, dbeta


def softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dp, p, axis=-1):
    return p * (dp - (dp * p).sum(axis=axis, keepdims=True))


def unit_normalize_forward(x):
    """Normalize along the last axis to unit Euclidean length."""
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise NumericError("cannot normalize a zero-norm vector")
    y = x / norm
    return y, (y, norm)


def unit_normalize_backward(dy, cache):
    y, norm = cache
    return (dy - y * (y * dy).sum(axis=-1, keepdims=True)) / norm


def _split_heads(x, heads):
    b, t, d = x.shape
    return x.reshape(b, t, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def attention_forward(x_q, x_kv, params: Params, prefix: str, heads: int):
    """Multi-head scaled-dot attention; x_q [B,Tq,D] attends over x_kv [B,Tk,D]."""
    q, cq = linear_forward(x_q, params[f"{prefix}.wq"], params[f"{prefix}.bq"])
    k, ck = linear_forward(x_kv, params[f"{prefix}.wk"], params[f"{prefix}.bk"])
    v, cv = linear_forward(x_kv, params[f"{prefix}.wv"], params[f"{prefix}.bv"])
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scale = 1.0 / np.sqrt(qh.shape[-1])
    logits = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    probs = softmax(logits, axis=-1)
    ctx = _merge_heads(probs @ vh)
    out, co = linear_forward(ctx, params[f"{prefix}.wo"], params[f"{prefix}.bo"])
    cache = (cq, ck, cv, co, qh, kh, vh, probs, scale, heads, prefix)
    return out, cache


def attention_backward(dout, cache):
    cq, ck, cv, co, qh, kh, vh, probs, scale, heads, prefix = cache
    grads: Grads = {}
    dctx_m, grads[f"{prefix}.wo"], grads[f"{prefix}.bo"] = linear_backward(dout, co)
    dctx = _split_heads(dctx_m, heads)
    dprobs = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = probs.transpose(0, 1, 3, 2) @ dctx
    dlogits = softmax_backward(dprobs, probs)
    dqh = (dlogits @ kh) * scale
    dkh = (dlogits.transpose(0, 1, 3, 2) @ qh) * scale
    dq, dk, dv = _merge_heads(dqh), _merge_heads(dkh), _merge_heads(dvh)
    dxq, grads[f"{prefix}.wq"], grads[f"{prefix}.bq"] = linear_backward(dq, cq)
    dxk, grads[f"{prefix}.wk"], grads[f"{prefix}.bk"] = linear_backward(dk, ck)
    dxv, grads[f"{prefix}.wv"], grads[f"{prefix}.bv"] = linear_backward(dv, cv)
    return dxq, dxk + dxv, grads


def block_forward(x, params: Params, prefix: str, heads: int):
    """Pre-norm residual block: attention then feed-forward."""
    h1, c_ln1 = layernorm_forward(x, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    attn, c_attn = attention_forward(h1, h1, params, f"{prefix}.attn", heads)
    x1 = x + attn
    h2, c_ln2 = layernorm_forward(x1, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    m1, c_fc1 = linear_forward(h2, params[f"{prefix}.mlp.w1"], params[f"{prefix}.mlp.b1"])
    g1 = gelu(m1)
    m2, c_fc2 = linear_forward(g1, params[f"{prefix}.mlp.w2"], params[f"{prefix}.mlp.b2"])
    y = x1 + m2
    cache = (c_ln1, c_attn, c_ln2, c_fc1, m1, c_fc2, prefix)
    return y, cache


def block_backward(dy, cache):
    c_ln1, c_attn, c_ln2, c_fc1, m1, c_fc2, prefix = cache
    grads: Grads = {}
    dg1, grads[f"{prefix}.mlp.w2"], grads[f"{prefix}.mlp.b2"] = linear_backward(dy, c_fc2)
    dm1 = dg1 * gelu_grad(m1)
    dh2, grads[f"{prefix}.mlp.w1"], grads[f"{prefix}.mlp.b1"] = linear_backward(dm1, c_fc1)
    dx1_mlp, grads[f"{prefix}.ln2.g"], grads[f"{prefix}.ln2.b"] = layernorm_backward(dh2, c_ln2)
    dx1 = dy + dx1_mlp
    dq, dkv, attn_grads = attention_backward(dx1, c_attn)
    accumulate(grads, attn_grads)
    dh1, grads[f"{prefix}.ln1.g"], grads[f"{prefix}.ln1.b"] = layernorm_backward(dq + dkv, c_ln1)
    return dx1 + dh1, grads


def encoder_forward(x, params: Params, prefix: str, n_layers: int, heads: int):
    """Stack of residual blocks; raises with the layer index on numeric failure."""
    caches = []
    for i in range(n_layers):
        x, cache = block_forward(x, params, f"{prefix}.{i}", heads)
        if not np.isfinite(x).all():
            raise NumericError(f"non-finite activations after {prefix} block {i}")
        caches.append(cache)
    return x, caches


def encoder_backward(dx, caches):
    grads: Grads = {}
    for cache in reversed(caches):
        dx, g = block_backward(dx, cache)
        accumulate(grads, g)
    return dx, grads


@lru_cache(maxsize=None)
def sinusoid_table(n_positions: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal position table [n_positions, dim] (read-only)."""
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, (2.0 * np.floor(i / 2.0)) / dim)
    table = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    table.setflags(write=False)
    return table


def xavier_normal(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


def init_block_params(rng: np.random.Generator, prefix: str, dim: int) -> Params:
    hidden = 4 * dim
    p: Params = {
        f"{prefix}.ln1.g": np.ones(dim),
        f"{prefix}.ln1.b": np.zeros(dim),
        f"{prefix}.ln2.g": np.ones(dim),
        f"{prefix}.ln2.b": np.zeros(dim),
        f"{prefix}.mlp.w1": xavier_normal(rng, dim, hidden),
        f"{prefix}.mlp.b1": np.zeros(hidden),
        f"{prefix}.mlp.w2": xavier_normal(rng, hidden, dim),
        f"{prefix}.mlp.b2": np.zeros(dim),
    }
    for name in ("wq", "wk", "wv", "wo"):
        p[f"{prefix}.attn.{name}"] = xavier_normal(rng, dim, dim)
    for name in ("bq", "bk", "bv", "bo"):
        p[f"{prefix}.attn.{name}"] = np.zeros(dim)
    return p
