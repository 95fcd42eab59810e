"""VQA answer metrics, detection mAP and Pearson correlation."""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

ROUGE_BETA2 = 1.2**2
BLEU_EPSILON = 1e-9
DEFAULT_IOU = 0.5

_TERMINAL_PUNCT = string.punctuation
_WS = re.compile(r"\s+")


class MetricError(ValueError):
    pass


def normalize(text: str) -> str:
    """Lowercase, trim whitespace and trailing punctuation, collapse spaces."""
    s = text.lower().strip()
    s = s.rstrip(_TERMINAL_PUNCT).strip()
    return _WS.sub(" ", s)


def tokenize(text) -> list[str]:
    """Shared tokenizer for every text metric. Token lists pass through."""
    if isinstance(text, str):
        s = normalize(text)
        return s.split(" ") if s else []
    return list(text)


# ---------------------------------------------------------------- closed-ended


def closed_accuracy(preds: Mapping[str, str], golds: Mapping[str, str]) -> float:
    """Fraction of qids whose normalized prediction equals the gold answer."""
    missing = sorted(set(golds) - set(preds))
    extra = sorted(set(preds) - set(golds))
    if missing or extra:
        raise MetricError(f"qid mismatch; missing predictions: {missing}, unknown qids: {extra}")
    if not golds:
        raise MetricError("no records to score")
    hits = sum(normalize(preds[q]) == normalize(golds[q]) for q in golds)
    return hits / len(golds)


# ---------------------------------------------------------------- BLEU


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(c: int, refs: Sequence[Sequence[str]]) -> int:
    return min((abs(len(r) - c), len(r)) for r in refs)[1]


def _clipped_counts(cand, refs, n):
    counts = _ngrams(cand, n)
    max_ref: Counter = Counter()
    for r in refs:
        for g, k in _ngrams(r, n).items():
            max_ref[g] = max(max_ref[g], k)
    matched = sum(min(k, max_ref[g]) for g, k in counts.items())
    return matched, max(len(cand) - n + 1, 0)


def _bleu_from_counts(matched, totals, cand_len, ref_len, max_n):
    if cand_len == 0:
        return 0.0
    # orders longer than the candidate have no n-grams at all; they are left out
    # and the geometric mean is taken over the orders that exist
    orders = [n for n in range(1, max_n + 1) if totals[n - 1] > 0]
    log_p = 0.0
    for n in orders:
        m, t = matched[n - 1], totals[n - 1]
        if m == 0:
            if n == 1:
                return 0.0
            p = BLEU_EPSILON
        else:
            p = m / t
        log_p += math.log(p) / len(orders)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return min(1.0, bp * math.exp(log_p))


def bleu(candidate, references, max_n: int = 1) -> float:
    """Sentence BLEU with clipped n-gram precision and brevity penalty.

    ``references`` is one reference (string or token list) or a list of
    several. Zero precisions for n >= 2 are replaced by 1e-9; orders with no
    candidate n-grams are skipped.
    """
    if max_n < 1:
        raise MetricError("max_n must be >= 1")
    cand = tokenize(candidate)
    refs = _as_refs(references)
    matched, totals = [], []
    for n in range(1, max_n + 1):
        m, t = _clipped_counts(cand, refs, n)
        matched.append(m)
        totals.append(t)
    return _bleu_from_counts(matched, totals, len(cand), _closest_ref_len(len(cand), refs), max_n)


def corpus_bleu(candidates, references_list, max_n: int = 1) -> float:
    """Corpus BLEU: n-gram counts and lengths pooled before combining."""
    if max_n < 1:
        raise MetricError("max_n must be >= 1")
    matched = [0] * max_n
    totals = [0] * max_n
    c_len = r_len = 0
    for cand, refs in zip(candidates, references_list, strict=True):
        cand = tokenize(cand)
        refs = _as_refs(refs)
        for n in range(1, max_n + 1):
            m, t = _clipped_counts(cand, refs, n)
            matched[n - 1] += m
            totals[n - 1] += t
        c_len += len(cand)
        r_len += _closest_ref_len(len(cand), refs)
    return _bleu_from_counts(matched, totals, c_len, r_len, max_n)


def _as_refs(references) -> list[list[str]]:
    # a string or a flat list of single tokens is one reference; otherwise each
    # element (text or token list) is its own reference
    if isinstance(references, str):
        return [tokenize(references)]
    refs = list(references)
    if all(isinstance(r, str) and len(r.split()) == 1 for r in refs):
        return [refs]
    return [tokenize(r) for r in refs]


# ---------------------------------------------------------------- Rouge-L


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> tuple[float, float, float]:
    """LCS precision, recall and F (beta^2 = 1.44)."""
    c, r = tokenize(candidate), tokenize(reference)
    lcs = lcs_length(c, r)
    if lcs == 0:
        return 0.0, 0.0, 0.0
    p, rec = lcs / len(c), lcs / len(r)
    f = (1 + ROUGE_BETA2) * p * rec / (rec + ROUGE_BETA2 * p)
    return p, rec, f


def open_recall(pred, gold) -> float:
    """Share of unique gold tokens present in the prediction."""
    g, p = set(tokenize(gold)), set(tokenize(pred))
    if not g:
        return 1.0 if not p else 0.0
    return len(g & p) / len(g)


# ---------------------------------------------------------------- detection


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: tuple[float, float, float, float]
    label: str
    confidence: float = 1.0

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping) -> "Detection":
        return cls(str(d["image_id"]), tuple(float(x) for x in d["box"]), str(d["label"]),
                   float(d.get("confidence", 1.0)))


def iou(a, b) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def average_precision(recall: Sequence[float], precision: Sequence[float]) -> float:
    """Area under the monotone precision envelope, all recall points."""
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def class_pr_curve(dets: Sequence[Detection], gts: Sequence[Detection], iou_threshold: float):
    """Precision/recall after each detection of one class, in ranked order."""
    by_image: dict[str, list] = {}
    for g in gts:
        by_image.setdefault(g.image_id, []).append(g.box)
    used = {k: [False] * len(v) for k, v in by_image.items()}
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)  # stable: ties keep input order
    tp = fp = 0
    recall, precision = [], []
    for i in order:
        d = dets[i]
        best, best_j = -1.0, -1
        for j, box in enumerate(by_image.get(d.image_id, [])):
            if used[d.image_id][j]:
                continue
            o = iou(d.box, box)
            if o > best:
                best, best_j = o, j
        if best_j >= 0 and best >= iou_threshold:
            used[d.image_id][best_j] = True
            tp += 1
        else:
            fp += 1
        recall.append(tp / len(gts))
        precision.append(tp / (tp + fp))
    return recall, precision


def mean_average_precision(dets: Iterable[Detection], gts: Iterable[Detection],
                           iou_threshold: float = DEFAULT_IOU) -> float:
    """Mean per-class AP over classes with at least one ground truth."""
    if not 0.0 < iou_threshold < 1.0:
        raise MetricError(f"iou threshold must lie in (0, 1), got {iou_threshold}")
    dets, gts = list(dets), list(gts)
    labels = sorted({g.label for g in gts})
    if not labels:
        return 0.0
    aps = []
    for label in labels:
        rec, prec = class_pr_curve([d for d in dets if d.label == label],
                                   [g for g in gts if g.label == label], iou_threshold)
        aps.append(average_precision(rec, prec) if rec else 0.0)
    return float(np.mean(aps))


# ---------------------------------------------------------------- correlation


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"pearson needs two equal-length sequences, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise MetricError("pearson needs at least two points")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(xc @ xc)), math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise MetricError("correlation undefined: zero variance")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


# ---------------------------------------------------------------- reports


@dataclass
class MetricReport:
    metrics: dict[str, float]
    counts: dict[str, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.metrics.items():
            if not math.isfinite(v):
                raise MetricError(f"metric {k} is not finite: {v}")
        for k, v in self.counts.items():
            if v < 0:
                raise MetricError(f"count {k} is negative")

    def to_dict(self) -> dict:
        return {"metrics": self.metrics, "counts": self.counts, "config": self.config}


def evaluate_answers(preds: Mapping[str, str], golds: Mapping[str, str], max_n: int = 1) -> MetricReport:
    """All answer metrics over qid-aligned prediction and gold maps."""
    acc = closed_accuracy(preds, golds)
    qids = sorted(golds)
    bleus = [bleu(preds[q], golds[q], max_n) for q in qids]
    rouges = [rouge_l(preds[q], golds[q]) for q in qids]
    recalls = [open_recall(preds[q], golds[q]) for q in qids]
    return MetricReport(
        metrics={
            "accuracy": acc,
            f"bleu{max_n}": float(np.mean(bleus)),
            f"corpus_bleu{max_n}": corpus_bleu([preds[q] for q in qids], [[golds[q]] for q in qids], max_n),
            "rouge_l_precision": float(np.mean([r[0] for r in rouges])),
            "rouge_l_recall": float(np.mean([r[1] for r in rouges])),
            "rouge_l_f": float(np.mean([r[2] for r in rouges])),
            "recall": float(np.mean(recalls)),
        },
        counts={"records": len(qids)},
        config={"max_n": max_n, "rouge_beta2": ROUGE_BETA2},
    )
