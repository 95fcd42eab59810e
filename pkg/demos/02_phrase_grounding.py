"""Region-phrase alignment: score every region against every phrase, match, and train.

Scores are plain dot products; matching takes the best phrase per region; the
loss is cross-entropy over phrases for each labelled region.
"""

import numpy as np

from groundcot import numerics as nx
from groundcot.grounding import alignment_scores, grounding_loss, match_regions

rng = np.random.default_rng(1)
phrases = np.linalg.qr(rng.standard_normal((6, 3)))[0].T  # three orthonormal phrase vectors
truth = [2, 0, 1, 2]
regions = 0.4 * rng.standard_normal((4, 6)) + 0.3 * phrases[truth]

s = alignment_scores(regions, phrases)
print("alignment scores (regions x phrases):\n", np.round(s, 3))
print("matches before training:", [j for j, _ in match_regions(s)], "truth:", truth)

# Learn a linear map on region features so the labelled pairs win.
pairs = list(enumerate(truth))
w = np.eye(6)
for step in range(200):
    _, g = nx.grad(lambda p: grounding_loss(alignment_scores(nx.matmul(regions, p["w"]), phrases), pairs), {"w": w})
    w = w - 0.5 * g["w"]
s = alignment_scores(regions @ w, phrases)
print("loss after training:", round(float(grounding_loss(s, pairs)), 5))
print("matches after training:", [j for j, _ in match_regions(s)])
