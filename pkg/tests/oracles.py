"""Brute-force reference implementations used only by the tests.

Everything here is written with explicit Python loops (or mpmath where extended
precision is wanted) and shares no code with the package under test.
"""

import itertools
import math

import mpmath as mp

mp.mp.dps = 40


def matmul_loops(a, b):
    n, k = len(a), len(a[0])
    m = len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def transpose(a):
    return [list(r) for r in zip(*a)]


def softmax_mp(row):
    ex = [mp.e ** mp.mpf(float(x)) for x in row]
    s = sum(ex)
    return [float(e / s) for e in ex]


def softmax_loops(row):
    m = max(row)
    ex = [math.exp(x - m) for x in row]
    s = sum(ex)
    return [e / s for e in ex]


def gelu_scalar(x):
    return 0.5 * x * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def mlp2_straight(x, w1, b1, w2, b2):
    out = []
    for row in x:
        hidden = []
        for j in range(len(w1[0])):
            z = b1[j] + sum(row[i] * w1[i][j] for i in range(len(row)))
            hidden.append(gelu_scalar(z))
        out.append([b2[j] + sum(hidden[i] * w2[i][j] for i in range(len(hidden))) for j in range(len(w2[0]))])
    return out


def mha_loops(xq, xkv, wq, wk, wv, wo, heads):
    """Per-head attention with explicit index loops; returns (output, per-head weights)."""
    q = matmul_loops(xq, wq)
    k = matmul_loops(xkv, wk)
    v = matmul_loops(xkv, wv)
    d = len(q[0])
    dh = d // heads
    ctx = [[0.0] * d for _ in q]
    all_w = []
    for h in range(heads):
        cols = range(h * dh, (h + 1) * dh)
        w_h = []
        for i in range(len(q)):
            logits = [sum(q[i][c] * k[j][c] for c in cols) / math.sqrt(dh) for j in range(len(k))]
            w = softmax_loops(logits)
            w_h.append(w)
            for c in cols:
                ctx[i][c] = sum(w[j] * v[j][c] for j in range(len(k)))
        all_w.append(w_h)
    return matmul_loops(ctx, wo), all_w


def combined_attention_loops(qg, kg, vg, qr, kr, in_box, alpha):
    """Enumerate every (query, key) logit of the blended regional/global attention."""
    d = len(qg[0])
    n = len(qg)
    weights, out = [], []
    for i in range(n):
        logits = []
        for j in range(n):
            g = sum(qg[i][c] * kg[j][c] for c in range(d))
            if j in in_box:
                r = sum(qr[i][c] * kr[j][c] for c in range(d))
                logits.append((alpha * r + (1 - alpha) * g) / math.sqrt(d))
            else:
                logits.append(g / math.sqrt(d))
        w = softmax_loops(logits)
        weights.append(w)
        out.append([sum(w[j] * vg[j][c] for j in range(n)) for c in range(len(vg[0]))])
    return out, weights


def cross_entropy_mp(rows, targets):
    total = mp.mpf(0)
    for row, t in zip(rows, targets):
        ex = [mp.e ** mp.mpf(float(x)) for x in row]
        total += mp.log(sum(ex)) - mp.mpf(float(row[t]))
    return float(total / len(rows))


def lcs_brute(a, b):
    """Longest subsequence of ``a`` that is also a subsequence of ``b`` by subset enumeration."""

    def is_subseq(s, t):
        it = iter(t)
        return all(x in it for x in s)

    for r in range(len(a), 0, -1):
        for combo in itertools.combinations(range(len(a)), r):
            if is_subseq([a[i] for i in combo], b):
                return r
    return 0


def bleu1_direct(cand, ref):
    if not cand:
        return 0.0
    matched = 0
    for w in set(cand):
        matched += min(cand.count(w), ref.count(w))
    if matched == 0:
        return 0.0
    bp = 1.0 if len(cand) > len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * matched / len(cand)


def box_iou(a, b):
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)


def map_brute(dets, gts, thr):
    """dets/gts: lists of (image, box, label, conf). Envelope AP by explicit recall-level scan."""
    labels = sorted({g[2] for g in gts})
    if not labels:
        return 0.0
    aps = []
    for lab in labels:
        g = [x for x in gts if x[2] == lab]
        d = [x for x in dets if x[2] == lab]
        ranked = sorted(enumerate(d), key=lambda p: (-p[1][3], p[0]))
        taken = set()
        hits = []
        for _, det in ranked:
            cands = [(box_iou(det[1], gt[1]), gi) for gi, gt in enumerate(g)
                     if gt[0] == det[0] and gi not in taken]
            best = max(cands, default=(0.0, None), key=lambda c: (c[0], -c[1]))
            if best[1] is not None and best[0] >= thr:
                taken.add(best[1])
                hits.append(1)
            else:
                hits.append(0)
        points = []
        tp = 0
        for k, h in enumerate(hits, start=1):
            tp += h
            points.append((tp / len(g), tp / k))
        ap = 0.0
        prev_r = 0.0
        for r in sorted({p[0] for p in points}):
            if r <= prev_r:
                continue
            best_p = max(p for rr, p in points if rr >= r)
            ap += (r - prev_r) * best_p
            prev_r = r
        aps.append(ap)
    return sum(aps) / len(aps)
