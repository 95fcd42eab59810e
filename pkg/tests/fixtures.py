"""Hand-built fixtures shared by the unit tests and the acceptance runner."""

from groundcot.metrics import Detection

# 10 closed-ended answers; hand count: q01-q07 match after normalization, q08-q10 do not
CLOSED_GOLDS = {
    "q01": "yes", "q02": "no", "q03": "left lung", "q04": "yes", "q05": "ct",
    "q06": "no", "q07": "mri", "q08": "yes", "q09": "liver", "q10": "two",
}
CLOSED_PREDS = {
    "q01": "Yes.", "q02": "no", "q03": "  Left   Lung ", "q04": "YES!", "q05": "CT",
    "q06": "No", "q07": "mri?", "q08": "no", "q09": "spleen", "q10": "three",
}

# one class, two ground truths on one image; ranked detections are TP, FP, TP
MAP_GTS = [
    Detection("img", (0.0, 0.0, 10.0, 10.0), "lesion"),
    Detection("img", (20.0, 20.0, 30.0, 30.0), "lesion"),
]
MAP_DETS = [
    Detection("img", (0.0, 0.0, 10.0, 10.0), "lesion", 0.9),
    Detection("img", (50.0, 50.0, 60.0, 60.0), "lesion", 0.8),
    Detection("img", (20.0, 20.0, 30.0, 30.0), "lesion", 0.7),
]
# PR points (R, P): (1/2, 1), (1/2, 1/2), (1, 2/3); envelope area = 1/2 * 1 + 1/2 * 2/3
MAP_EXPECTED = 5 / 6

# per-body-region (grounding mAP, answer accuracy) pairs
BODY_REGION_PAIRS = [(62.43, 84.43), (69.05, 88.00), (65.33, 91.60), (42.23, 68.75), (51.74, 68.42)]
# 40-digit mpmath evaluation of the sample correlation of BODY_REGION_PAIRS
BODY_REGION_R = 0.9207477303442139

# 10 questions with judge scores 5,4,3,2,1,5,4,3,2,1; min score 3 keeps 6 and rejects 4
SCRIPTED_QUESTIONS = [f"question {i}" for i in range(10)]
SCRIPTED_SCORES = {q: s for q, s in zip(SCRIPTED_QUESTIONS, [5, 4, 3, 2, 1, 5, 4, 3, 2, 1])}
SCRIPTED_ACCEPTED = {"question 0", "question 1", "question 2", "question 5", "question 6", "question 7"}


def rationale_inputs(n: int) -> list[dict]:
    return [{"qid": f"r{i:04d}", "image_id": f"img{i % 7}", "question": f"what is finding {i}?"} for i in range(n)]
