"""Regional/global blended attention over a token grid.

A grid of ``H x W`` tokens is flattened row-major into ``H*W`` rows. A
:class:`RegionBox` marks a half-open rectangle of it. Every grid token is a
query. For keys inside the box the logit blends a regional score with the
global one::

    logit[i, j] = (alpha * qr_i . kr_j + (1 - alpha) * qg_i . kg_j) / sqrt(d)   j in box
    logit[i, j] = qg_i . kg_j / sqrt(d)                                          otherwise

and a single softmax runs over all keys, so every row stays a distribution.
The ``1/sqrt(d)`` factor sits inside the softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fusion import uniform_init
from .numerics import ShapeError, add, gather_rows, matmul, mul, softmax_rows, sub, transpose, value_of


@dataclass(frozen=True)
class RegionBox:
    """Half-open box ``[x0, x1) x [y0, y1)``; x indexes columns, y rows."""

    x0: int
    y0: int
    x1: int
    y1: int

    def validate(self, shape: tuple[int, int]) -> None:
        h, w = shape
        if not (0 <= self.x0 < self.x1 <= w and 0 <= self.y0 < self.y1 <= h):
            raise ShapeError(f"box {self} out of bounds for a {h}x{w} grid")

    def indices(self, shape: tuple[int, int]) -> list[int]:
        self.validate(shape)
        w = shape[1]
        return [y * w + x for y in range(self.y0, self.y1) for x in range(self.x0, self.x1)]

    @property
    def size(self) -> tuple[int, int]:
        return self.y1 - self.y0, self.x1 - self.x0

    def as_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1}


@dataclass(frozen=True)
class BlendConfig:
    alpha: float = 0.5
    width: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def select_region_tokens(grid, shape: tuple[int, int], box: RegionBox):
    """Row-major indices of the box and the matching rows of ``grid``."""
    h, w = shape
    if value_of(grid).shape[-2] != h * w:
        raise ShapeError(f"grid has {value_of(grid).shape[-2]} tokens, shape {shape} needs {h * w}")
    idx = box.indices(shape)
    return idx, gather_rows(grid, idx)


def box_mask(shape: tuple[int, int], box: RegionBox | Sequence[RegionBox]) -> np.ndarray:
    """1.0 on in-box keys. A sequence of boxes gives a (B, 1, H*W) batch mask."""
    h, w = shape
    if isinstance(box, RegionBox):
        m = np.zeros(h * w)
        m[box.indices(shape)] = 1.0
        return m
    return np.stack([box_mask(shape, b) for b in box])[:, None, :]


def global_attention(q, k, v):
    """Plain scaled dot-product attention; returns (output, weights)."""
    d = value_of(q).shape[-1]
    a = softmax_rows(mul(matmul(q, transpose(k)), 1.0 / math.sqrt(d)))
    return matmul(a, v), a


def combined_attention(q_g, k_g, v_g, box, shape: tuple[int, int], cfg: BlendConfig, q_r=None, k_r=None):
    """Blend regional and global logits on in-box keys; returns (output, weights).

    ``q_r``/``k_r`` are the regional query/key projections of every grid
    token (only in-box key rows are used). When omitted they default to the
    global projections. For batched inputs (B, H*W, d) pass one box per item.
    """
    h, w = shape
    qv, kv, vv = value_of(q_g), value_of(k_g), value_of(v_g)
    n = h * w
    if qv.shape[-2] != n or kv.shape[-2] != n or vv.shape[-2] != n:
        raise ShapeError(f"projections {qv.shape}/{kv.shape}/{vv.shape} do not match {n} grid tokens")
    if qv.shape[-1] != kv.shape[-1]:
        raise ShapeError(f"query/key width mismatch: {qv.shape} vs {kv.shape}")
    if cfg.width is not None and qv.shape[-1] != cfg.width:
        raise ShapeError(f"projection width {qv.shape[-1]} != configured width {cfg.width}")
    for name, r in (("q_r", q_r), ("k_r", k_r)):
        if r is not None and value_of(r).shape[-2:] != qv.shape[-2:]:
            raise ShapeError(f"{name} shape {value_of(r).shape} != {qv.shape}")
    mask = box_mask(shape, box)
    if qv.ndim == 3 and mask.ndim == 1:
        raise ShapeError("batched projections need one box per item")
    d = qv.shape[-1]
    g = matmul(q_g, transpose(k_g))
    if q_r is None and k_r is None:
        r = g
    else:
        r = matmul(q_g if q_r is None else q_r, transpose(k_g if k_r is None else k_r))
    # in-box: g + alpha * (r - g) == alpha * r + (1 - alpha) * g; out-of-box: g exactly
    blend = mul(sub(r, g), cfg.alpha * mask)
    a = softmax_rows(mul(add(g, blend), 1.0 / math.sqrt(d)))
    return matmul(a, v_g), a


def init_region_params(d: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {f"reg.{k}": uniform_init(rng, (d, d), d) for k in ("wq_g", "wk_g", "wv", "wq_r", "wk_r")}


def regional_attention(x, params: dict, box, shape: tuple[int, int], alpha: float):
    """Project grid features, then run :func:`combined_attention`."""
    p = params
    return combined_attention(
        matmul(x, p["reg.wq_g"]),
        matmul(x, p["reg.wk_g"]),
        matmul(x, p["reg.wv"]),
        box,
        shape,
        BlendConfig(alpha=alpha),
        q_r=matmul(x, p["reg.wq_r"]),
        k_r=matmul(x, p["reg.wk_r"]),
    )
