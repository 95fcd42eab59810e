"""Region-phrase alignment: scores, matching and a cross-entropy objective."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .numerics import ShapeError, UsageError, cross_entropy, gather_rows, matmul, reshape, transpose, value_of


def alignment_scores(v, t):
    """Region x phrase score table ``v @ t.T`` (N x M). No temperature."""
    vv, tv = value_of(v), value_of(t)
    if vv.shape[-1] != tv.shape[-1]:
        raise ShapeError(f"feature width mismatch: regions {vv.shape} vs phrases {tv.shape}")
    return matmul(v, transpose(t))


def match_regions(scores) -> list[tuple[int, float]]:
    """Best phrase per region; ties go to the lowest phrase index."""
    s = value_of(scores)
    if s.ndim != 2 or s.shape[0] == 0 or s.shape[1] == 0:
        raise ShapeError(f"match_regions needs a nonempty N x M matrix, got {s.shape}")
    best = np.argmax(s, axis=1)  # argmax returns the first maximum
    return [(int(j), float(s[i, j])) for i, j in enumerate(best)]


def validate_labels(pairs: Iterable[tuple[int, int]], n_regions: int, n_phrases: int) -> dict[int, int]:
    labels: dict[int, int] = {}
    for r, p in pairs:
        if not (0 <= r < n_regions and 0 <= p < n_phrases):
            raise ValueError(f"label ({r}, {p}) out of range for {n_regions}x{n_phrases}")
        if r in labels and labels[r] != p:
            raise ValueError(f"region {r} has more than one positive phrase")
        labels[r] = p
    return labels


def grounding_loss(scores, pairs: Iterable[tuple[int, int]]):
    """Mean cross-entropy of each labelled region's row against its phrase.

    Regions without a positive are ignored. Differentiable when ``scores``
    is recorded on a tape.
    """
    s = value_of(scores)
    labels = validate_labels(pairs, s.shape[0], s.shape[1])
    if not labels:
        raise UsageError("grounding_loss needs at least one labelled region")
    regions = sorted(labels)
    targets = [labels[r] for r in regions]
    return cross_entropy(gather_rows(scores, regions), targets)


def batched_grounding_loss(scores, region_idx, targets):
    """Loss over stacked score tables (B, N, M) with a B x K block of labelled regions."""
    region_idx = np.asarray(region_idx, dtype=np.intp)
    b, k = region_idx.shape
    rows = gather_rows(scores, region_idx)
    return cross_entropy(reshape(rows, (b * k, value_of(scores).shape[-1])), np.asarray(targets).reshape(-1))
