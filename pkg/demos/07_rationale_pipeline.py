"""Building verified question/answer/rationale records.

Stage one fills a missing answer, stage two writes a rationale, then a judge
scores consistency on a 1-5 scale. Records that are consistent and meet the
minimum score are accepted; the rest, including backend failures, are kept
in a rejected list. Mock backends make the run deterministic; ``HttpBackend``
speaks a small JSON protocol to a real service.
"""

from pathlib import Path

from groundcot.rationale import (
    MockGenerator,
    MockJudge,
    ScriptedJudge,
    build_dataset,
    score_histogram,
    validate_jsonl,
    write_jsonl,
)

inputs = [
    {"qid": "q1", "image_id": "chest_001", "question": "Is there a pleural effusion?", "answer": "yes"},
    {"qid": "q2", "image_id": "chest_002", "question": "Which lung is affected?"},
    {"qid": "q3", "image_id": "abd_007", "question": "What organ is enlarged?", "caption": "axial CT"},
]

accepted, rejected, stats = build_dataset(inputs, MockGenerator(seed=1), MockJudge(), concurrency=2)
for r in accepted:
    print(f"[{r.score}] {r.question} -> {r.answer}\n    {r.rationale}")
print("stats:", stats.to_dict())

scores = {"Is there a pleural effusion?": 5, "Which lung is affected?": 2, "What organ is enlarged?": 3}
accepted, rejected, _ = build_dataset(inputs, MockGenerator(), ScriptedJudge(scores), min_score=3)
print("scripted judge keeps", [r.qid for r in accepted], "and rejects", [r.qid for r in rejected])
print("score histogram:", score_histogram(accepted + rejected).as_dict())

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
write_jsonl(out / "records.jsonl", accepted + rejected)
report = validate_jsonl(out / "records.jsonl")
print(f"validated {report.records} records, valid: {report.valid}")
