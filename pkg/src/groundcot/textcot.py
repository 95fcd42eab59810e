"""Text reasoning head: text-to-vision alignment and iterative text refinement.

Refinement lets text tokens cross-attend over the regional and global visual
tokens concatenated into one key/value set, so a single softmax covers both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fusion import multihead_attention, uniform_init
from .numerics import (
    ShapeError,
    add,
    concat_rows,
    layer_norm,
    matmul,
    mean_rows,
    mlp2,
    mul,
    reshape,
    softmax_rows,
    transpose,
    value_of,
)


@dataclass(frozen=True)
class TextCotConfig:
    layers: int = 1
    heads: int = 2
    width: int = 8
    classes: int = 2
    ffn_mult: int = 2

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"layer count must be >= 1, got {self.layers}")
        if self.width <= 0 or self.width % self.heads:
            raise ValueError(f"width {self.width} is not divisible by {self.heads} heads")

    def meta(self) -> dict:
        return {"layers": self.layers, "heads": self.heads, "width": self.width,
                "classes": self.classes, "ffn_mult": self.ffn_mult}


def init_textcot(cfg: TextCotConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    d, hidden = cfg.width, cfg.ffn_mult * cfg.width
    p = {
        "align.wq": uniform_init(rng, (d, d), d),
        "align.wk": uniform_init(rng, (d, d), d),
    }
    for i in range(cfg.layers):
        pre = f"cot{i}"
        for k in ("wq", "wk", "wv", "wo"):
            p[f"{pre}.attn.{k}"] = uniform_init(rng, (d, d), d)
        p[f"{pre}.ln1.g"] = np.ones((1, d))
        p[f"{pre}.ln1.b"] = np.zeros((1, d))
        p[f"{pre}.ln2.g"] = np.ones((1, d))
        p[f"{pre}.ln2.b"] = np.zeros((1, d))
        p[f"{pre}.ffn.w1"] = uniform_init(rng, (d, hidden), d)
        p[f"{pre}.ffn.b1"] = np.zeros((1, hidden))
        p[f"{pre}.ffn.w2"] = uniform_init(rng, (hidden, d), d)
        p[f"{pre}.ffn.b2"] = np.zeros((1, d))
    p["head.w"] = uniform_init(rng, (d, cfg.classes), d)
    p["head.b"] = np.zeros((1, cfg.classes))
    return p


def text_alignment(t, v, params: dict):
    """Softmax over visual tokens of projected text-visual scores (M x N)."""
    wq, wk = params["align.wq"], params["align.wk"]
    tv, vv = value_of(t), value_of(v)
    if tv.shape[-1] != value_of(wq).shape[0] or vv.shape[-1] != value_of(wk).shape[0]:
        raise ShapeError(f"text {tv.shape} / visual {vv.shape} do not match alignment projections")
    q = matmul(t, wq)
    k = matmul(v, wk)
    d = value_of(q).shape[-1]
    return softmax_rows(mul(matmul(q, transpose(k)), 1.0 / math.sqrt(d)))


def refine_layer(t, visual, params: dict, i: int, heads: int, weights: list | None = None):
    p, pre = params, f"cot{i}"
    h = layer_norm(t, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
    attn = multihead_attention(h, visual, *(p[f"{pre}.attn.{k}"] for k in ("wq", "wk", "wv", "wo")), heads, weights)
    t = add(t, attn)
    h = layer_norm(t, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
    return add(t, mlp2(h, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.b1"], p[f"{pre}.ffn.w2"], p[f"{pre}.ffn.b2"]))


def refine(t0, v_regional, v_global, params: dict, cfg: TextCotConfig, weights: list | None = None):
    """Apply ``cfg.layers`` cross-attention refinement layers to text features."""
    widths = {value_of(x).shape[-1] for x in (t0, v_regional, v_global)}
    if widths != {cfg.width}:
        raise ShapeError(f"feature widths {sorted(widths)} do not all equal {cfg.width}")
    visual = concat_rows([v_regional, v_global])
    t = t0
    for i in range(cfg.layers):
        t = refine_layer(t, visual, params, i, cfg.heads, weights)
    return t


def classify(t0, v_regional, v_global, params: dict, cfg: TextCotConfig):
    """Answer logits: mean-pooled refined text through a linear readout."""
    pooled = mean_rows(refine(t0, v_regional, v_global, params, cfg))
    if value_of(pooled).ndim == 1:
        pooled = reshape(pooled, (1, -1))
    return add(matmul(pooled, params["head.w"]), params["head.b"])
