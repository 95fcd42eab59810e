"""Cross-modal fusion stack.

Each layer exchanges context between the region stream ``V`` and the text
stream ``T`` with paired cross attention, adds it residually, then pushes
each stream through its own encoder block::

    v_ctx, t_ctx = xmha(V, T)
    V <- vision_block(V + v_ctx)
    T <- text_block(T + t_ctx)

Both blocks are the same pre-norm transformer block (self-attention then a
GELU feed-forward, each with a residual). They stand in for the detector's
dynamic head and the BERT layer, neither of which is reproduced here.

Parameters live in a flat ``dict[str, ndarray]`` keyed like
``"layer0.t2i.wq"`` so they can be differentiated, checkpointed and updated
without any container classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    ShapeError,
    add,
    concat_cols,
    layer_norm,
    matmul,
    mlp2,
    mul,
    softmax_rows,
    take_cols,
    transpose,
    value_of,
)


@dataclass(frozen=True)
class FusionConfig:
    layers: int = 1
    heads: int = 2
    width: int = 8
    activation: str = "gelu"
    ffn_mult: int = 2

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"layer count must be >= 1, got {self.layers}")
        if self.width <= 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.heads < 1 or self.width % self.heads:
            raise ValueError(f"width {self.width} is not divisible by {self.heads} heads")
        if self.activation != "gelu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    def meta(self) -> dict:
        return {"layers": self.layers, "heads": self.heads, "width": self.width,
                "activation": self.activation, "ffn_mult": self.ffn_mult}


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def multihead_attention(xq, xkv, wq, wk, wv, wo, heads: int, weights: list | None = None):
    """Scaled dot-product attention split over ``heads`` column blocks.

    Per-head scale is ``1/sqrt(width/heads)``. If ``weights`` is a list, the
    attention matrix of every head is appended to it (as plain arrays).
    """
    q = matmul(xq, wq)
    k = matmul(xkv, wk)
    v = matmul(xkv, wv)
    d = value_of(q).shape[-1]
    if d % heads:
        raise ShapeError(f"projection width {d} is not divisible by {heads} heads")
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    outs = []
    for h in range(heads):
        lo, hi = h * dh, (h + 1) * dh
        logits = mul(matmul(take_cols(q, lo, hi), transpose(take_cols(k, lo, hi))), scale)
        a = softmax_rows(logits)
        if weights is not None:
            weights.append(np.array(value_of(a)))
        outs.append(matmul(a, take_cols(v, lo, hi)))
    ctx = outs[0] if heads == 1 else concat_cols(outs)
    return matmul(ctx, wo)


def _attn_keys(prefix):
    return [f"{prefix}.{k}" for k in ("wq", "wk", "wv", "wo")]


def xmha(v, t, params: dict, prefix: str, heads: int, weights: list | None = None):
    """Paired cross attention: regions attend to text and text attends to regions.

    Returns ``(v_t2i, t_i2t)`` with the shapes of ``v`` and ``t``. The two
    directions use separate projections (``{prefix}.t2i.*`` and ``{prefix}.i2t.*``).
    """
    vv, tv = value_of(v), value_of(t)
    if vv.shape[-1] != tv.shape[-1]:
        raise ShapeError(f"xmha width mismatch: {vv.shape} vs {tv.shape}")
    d = vv.shape[-1]
    for key in _attn_keys(f"{prefix}.t2i") + _attn_keys(f"{prefix}.i2t"):
        if value_of(params[key]).shape != (d, d):
            raise ShapeError(f"{key} has shape {value_of(params[key]).shape}, expected {(d, d)}")
    v_t2i = multihead_attention(v, t, *(params[k] for k in _attn_keys(f"{prefix}.t2i")), heads, weights)
    t_i2t = multihead_attention(t, v, *(params[k] for k in _attn_keys(f"{prefix}.i2t")), heads, weights)
    return v_t2i, t_i2t


def encoder_block(x, params: dict, prefix: str, heads: int, weights: list | None = None):
    """Pre-norm block: ``x + attn(ln1(x))`` then ``+ ffn(ln2(.))``."""
    p = params
    h = layer_norm(x, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    x = add(x, multihead_attention(h, h, *(p[k] for k in _attn_keys(f"{prefix}.attn")), heads, weights))
    h = layer_norm(x, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
    return add(x, mlp2(h, p[f"{prefix}.ffn.w1"], p[f"{prefix}.ffn.b1"], p[f"{prefix}.ffn.w2"], p[f"{prefix}.ffn.b2"]))


def fusion_layer(v, t, params: dict, i: int, heads: int, weights: list | None = None):
    v_ctx, t_ctx = xmha(v, t, params, f"layer{i}", heads, weights)
    v_next = encoder_block(add(v, v_ctx), params, f"layer{i}.vis", heads, weights)
    t_next = encoder_block(add(t, t_ctx), params, f"layer{i}.txt", heads, weights)
    return v_next, t_next


def fuse_stack(v0, t0, cfg: FusionConfig, params: dict, weights: list | None = None):
    d0v, d0t = value_of(v0).shape[-1], value_of(t0).shape[-1]
    if d0v != cfg.width or d0t != cfg.width:
        raise ShapeError(f"inputs have widths {d0v}/{d0t}, config width is {cfg.width}")
    v, t = v0, t0
    for i in range(cfg.layers):
        v, t = fusion_layer(v, t, params, i, cfg.heads, weights)
    return v, t


def init_block(rng, d: int, ffn_mult: int, prefix: str) -> dict:
    hidden = ffn_mult * d
    p = {
        f"{prefix}.ln1.g": np.ones((1, d)),
        f"{prefix}.ln1.b": np.zeros((1, d)),
        f"{prefix}.ln2.g": np.ones((1, d)),
        f"{prefix}.ln2.b": np.zeros((1, d)),
        f"{prefix}.ffn.w1": uniform_init(rng, (d, hidden), d),
        f"{prefix}.ffn.b1": np.zeros((1, hidden)),
        f"{prefix}.ffn.w2": uniform_init(rng, (hidden, d), d),
        f"{prefix}.ffn.b2": np.zeros((1, d)),
    }
    for key in _attn_keys(f"{prefix}.attn"):
        p[key] = uniform_init(rng, (d, d), d)
    return p


def init_fusion(cfg: FusionConfig, seed: int) -> dict:
    """Seeded uniform(-1/sqrt(d), 1/sqrt(d)) weights, zero biases, unit norms."""
    rng = np.random.default_rng(seed)
    d = cfg.width
    params: dict = {}
    for i in range(cfg.layers):
        for key in _attn_keys(f"layer{i}.t2i") + _attn_keys(f"layer{i}.i2t"):
            params[key] = uniform_init(rng, (d, d), d)
        params.update(init_block(rng, d, cfg.ffn_mult, f"layer{i}.vis"))
        params.update(init_block(rng, d, cfg.ffn_mult, f"layer{i}.txt"))
    return params


# ---------------------------------------------------------------- projector


def init_projector(d_in: int, d_hidden: int, d_out: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "proj.w1": uniform_init(rng, (d_in, d_hidden), d_in),
        "proj.b1": np.zeros((1, d_hidden)),
        "proj.w2": uniform_init(rng, (d_hidden, d_out), d_in),
        "proj.b2": np.zeros((1, d_out)),
    }


def project(x, params: dict):
    """Two-layer GELU projector from vision width into the language width."""
    return mlp2(x, params["proj.w1"], params["proj.b1"], params["proj.w2"], params["proj.b2"])
