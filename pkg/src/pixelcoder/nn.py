"""Transformer building blocks on top of the autodiff engine.

Initialization: truncated normal (sigma 0.02) for projection matrices,
zeros for biases, ones for layer-norm gains.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, dropout, gelu, layer_norm, masked_softmax, matmul


def trunc_normal(shape, rng: np.random.Generator, std: float = 0.02, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) resampled until every value lies within 2 std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(dtype)


def init_linear(d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32):
    w = Tensor(trunc_normal((d_in, d_out), rng, dtype=dtype), requires_grad=True, dtype=dtype)
    b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True, dtype=dtype)
    return w, b


def init_layer_norm(d: int, dtype=np.float32):
    g = Tensor(np.ones(d, dtype=dtype), requires_grad=True, dtype=dtype)
    b = Tensor(np.zeros(d, dtype=dtype), requires_grad=True, dtype=dtype)
    return g, b


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return matmul(x, w) + b


def init_attention(width: int, rng: np.random.Generator, dtype=np.float32) -> dict:
    params = {}
    for name in ("wq", "wk", "wv", "wo"):
        params[name], params["b" + name[1]] = init_linear(width, width, rng, dtype=dtype)
    return params


def self_attention(
    x: Tensor,
    valid_len,
    heads: int,
    params: dict,
    *,
    p_drop: float = 0.0,
    rng: np.random.Generator | None = None,
    train: bool = False,
    return_weights: bool = False,
):
    """Multi-head scaled dot-product self-attention over a (seq, width) tensor.

    Positions at or beyond ``valid_len`` neither attend nor are attended to:
    their key/value weight is exactly zero and their own output rows are
    zeroed, so rows below ``valid_len`` are bitwise independent of anything
    past it.
    """
    seq, width = x.data.shape
    if width % heads != 0:
        raise ValueError(f"width {width} not divisible by {heads} heads")
    dh = width // heads
    scale = 1.0 / float(np.sqrt(dh))

    q = linear(x, params["wq"], params["bq"]).reshape(seq, heads, dh).transpose(1, 0, 2)
    k = linear(x, params["wk"], params["bk"]).reshape(seq, heads, dh).transpose(1, 0, 2)
    v = linear(x, params["wv"], params["bv"]).reshape(seq, heads, dh).transpose(1, 0, 2)

    scores = matmul(q, k.transpose(0, 2, 1)) * scale
    weights = masked_softmax(scores, valid_len)
    probs = dropout(weights, p_drop, rng, train) if p_drop > 0.0 else weights
    ctx = matmul(probs, v).transpose(1, 0, 2).reshape(seq, width)
    out = linear(ctx, params["wo"], params["bo"])
    if valid_len is not None and valid_len < seq:
        row_mask = np.zeros((seq, 1), dtype=x.data.dtype)
        row_mask[:valid_len] = 1.0
        out = out * row_mask
    if return_weights:
        return out, weights.data
    return out


def init_encoder_layer(width: int, intermediate: int, rng: np.random.Generator, dtype=np.float32) -> dict:
    params = init_attention(width, rng, dtype=dtype)
    params["ln1_g"], params["ln1_b"] = init_layer_norm(width, dtype=dtype)
    params["ln2_g"], params["ln2_b"] = init_layer_norm(width, dtype=dtype)
    params["w1"], params["b1"] = init_linear(width, intermediate, rng, dtype=dtype)
    params["w2"], params["b2"] = init_linear(intermediate, width, rng, dtype=dtype)
    return params


def encoder_layer(
    x: Tensor,
    valid_len,
    heads: int,
    params: dict,
    *,
    eps: float = 1e-12,
    p_drop: float = 0.0,
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> Tensor:
    """Pre-norm transformer block: attention then MLP, each with a residual."""
    h = layer_norm(x, params["ln1_g"], params["ln1_b"], eps)
    h = self_attention(h, valid_len, heads, params, p_drop=p_drop, rng=rng, train=train)
    x = x + dropout(h, p_drop, rng, train)
    h = layer_norm(x, params["ln2_g"], params["ln2_b"], eps)
    h = linear(gelu(linear(h, params["w1"], params["b1"])), params["w2"], params["b2"])
    return x + dropout(h, p_drop, rng, train)
