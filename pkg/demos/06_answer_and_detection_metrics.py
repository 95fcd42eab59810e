"""Answer metrics, detection mAP and the body-region correlation.

All text metrics share one normaliser: lowercase, trim, drop trailing
punctuation, collapse whitespace.
"""

from groundcot.metrics import (
    Detection,
    bleu,
    closed_accuracy,
    mean_average_precision,
    open_recall,
    pearson,
    rouge_l,
)

print("closed accuracy:", closed_accuracy({"q1": "Yes.", "q2": "left"}, {"q1": "yes", "q2": "right"}))
print("BLEU-1 'the cat sat' vs 'the cat sat down':", round(bleu("the cat sat", "the cat sat down"), 6))
print("BLEU-2 with two references:", round(bleu("the cat sat", [["the", "cat", "is", "here"], ["a", "cat", "sat"]], 2), 6))
print("Rouge-L (P, R, F) 'a b c d' vs 'a c d':", tuple(round(x, 6) for x in rouge_l("a b c d", "a c d")))
print("open recall 'left lung lesion' vs 'lesion in lung':", round(open_recall("left lung lesion", "lesion in lung"), 6))

gts = [Detection("img", (0, 0, 10, 10), "lesion"), Detection("img", (20, 20, 30, 30), "lesion")]
dets = [
    Detection("img", (0, 0, 10, 10), "lesion", 0.9),
    Detection("img", (50, 50, 60, 60), "lesion", 0.8),
    Detection("img", (21, 20, 31, 30), "lesion", 0.7),
]
print("mAP@0.5 (hit, miss, hit):", round(mean_average_precision(dets, gts), 6))

# grounding quality vs answer accuracy across five body regions
maps = [62.43, 69.05, 65.33, 42.23, 51.74]
accs = [84.43, 88.00, 91.60, 68.75, 68.42]
print("Pearson r between region mAP and accuracy:", round(pearson(maps, accs), 4))
