"""Two-stage answer/rationale generation with judge verification.

Each input question (optionally with an answer) goes through:

1. ``generate_answer`` if no answer was supplied,
2. ``generate_rationale`` given question, image descriptor and answer,
3. ``judge`` which returns ``(consistent, score, reason)``.

A record is accepted iff the judge calls it consistent and its score is at
least ``min_score``. Everything else, including records whose backend call
failed, lands in the rejected list so nothing is silently dropped.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

DEFAULT_MIN_SCORE = 3
TOKEN_ENV = "GROUNDCOT_BACKEND_TOKEN"

RECORD_FIELDS = ("qid", "image_id", "question", "answer", "rationale", "score", "source_dataset", "split")


@dataclass
class QIARecord:
    qid: str
    image_id: str
    question: str
    answer: str
    rationale: str | None = None
    score: int | None = None
    source_dataset: str = ""
    split: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)


class GenerationBackend(Protocol):
    def generate_answer(self, question: str, image: str) -> str: ...

    def generate_rationale(self, question: str, image: str, answer: str) -> str: ...


class JudgeBackend(Protocol):
    def judge(self, question: str, image: str, answer: str, rationale: str) -> tuple[bool, int, str]: ...


class BackendError(RuntimeError):
    pass


def image_descriptor(image_id: str, caption: str | None = None) -> str:
    return f"{image_id}: {caption}" if caption else image_id


# ---------------------------------------------------------------- mock backends

_TEMPLATES = (
    "Looking at {image}, the question asks '{question}'. The relevant finding supports the answer: {answer}.",
    "Step 1: inspect {image}. Step 2: relate it to '{question}'. Conclusion: {answer}.",
    "The visible evidence in {image} answers '{question}' with {answer}.",
)


class MockGenerator:
    """Deterministic generator: answer echoes the question, rationale embeds the answer."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def generate_answer(self, question: str, image: str) -> str:
        return f"A: {question}"

    def generate_rationale(self, question: str, image: str, answer: str) -> str:
        digest = hashlib.sha256(f"{self.seed}|{question}|{image}".encode()).digest()
        return _TEMPLATES[digest[0] % len(_TEMPLATES)].format(image=image, question=question, answer=answer)


class MockJudge:
    """Consistent iff the answer appears verbatim in the rationale; score 5 or 1."""

    def judge(self, question, image, answer, rationale):
        if answer and answer in rationale:
            return True, 5, "answer restated in rationale"
        return False, 1, "rationale does not support the answer"


class ScriptedJudge:
    """Returns preset scores keyed by question text, always marked consistent."""

    def __init__(self, scores: Mapping[str, int], default: int = 1):
        self.scores = dict(scores)
        self.default = default

    def judge(self, question, image, answer, rationale):
        s = self.scores.get(question, self.default)
        return True, s, "scripted"


# ---------------------------------------------------------------- HTTP backend


class HttpBackend:
    """JSON-over-HTTP generation and judging.

    Request: ``{"task": "answer"|"rationale"|"judge", "question", "image_descriptor",
    "answer"?, "rationale"?}``. Response: ``{"text"}`` for generation tasks or
    ``{"consistent", "score", "reason"}`` for judging. The bearer token is read
    from ``GROUNDCOT_BACKEND_TOKEN`` when set.
    """

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 2, backoff: float = 0.5, token: str | None = None):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)

    def _post(self, payload: dict) -> dict:
        body = json.dumps(payload).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode("utf-8"))
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
                last = exc
        raise BackendError(f"backend request failed after {self.retries + 1} attempts: {last}")

    def _text(self, payload: dict) -> str:
        out = self._post(payload)
        if not isinstance(out.get("text"), str):
            raise BackendError(f"backend response lacks 'text': {out}")
        return out["text"]

    def generate_answer(self, question, image):
        return self._text({"task": "answer", "question": question, "image_descriptor": image})

    def generate_rationale(self, question, image, answer):
        return self._text({"task": "rationale", "question": question, "image_descriptor": image, "answer": answer})

    def judge(self, question, image, answer, rationale):
        out = self._post({"task": "judge", "question": question, "image_descriptor": image,
                          "answer": answer, "rationale": rationale})
        score = out.get("score")
        if not isinstance(score, int) or isinstance(score, bool) or not 1 <= score <= 5:
            raise BackendError(f"judge returned invalid score {score!r}")
        return bool(out.get("consistent")), score, str(out.get("reason", ""))


# ---------------------------------------------------------------- pipeline


@dataclass
class BuildStats:
    total: int = 0
    accepted: int = 0
    rejected: int = 0
    errors: int = 0
    min_score: int = DEFAULT_MIN_SCORE
    error_notes: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _process(item: Mapping, gen: GenerationBackend, judge: JudgeBackend, min_score: int):
    rec = QIARecord(
        qid=str(item["qid"]),
        image_id=str(item["image_id"]),
        question=str(item["question"]),
        answer=str(item.get("answer") or ""),
        source_dataset=str(item.get("source_dataset", "")),
        split=str(item.get("split", "")),
    )
    image = image_descriptor(rec.image_id, item.get("caption"))
    try:
        if not rec.answer:
            rec.answer = gen.generate_answer(rec.question, image)
        rec.rationale = gen.generate_rationale(rec.question, image, rec.answer)
        consistent, score, _reason = judge.judge(rec.question, image, rec.answer, rec.rationale)
        if not isinstance(score, int) or not 1 <= score <= 5:
            raise BackendError(f"judge score {score!r} outside 1..5")
        rec.score = score
    except Exception as exc:  # backend failures are routed, not raised
        rec.score = None
        return rec, False, f"{type(exc).__name__}: {exc}"
    return rec, bool(consistent) and score >= min_score, None


def build_dataset(
    inputs: Iterable[Mapping],
    gen: GenerationBackend,
    judge: JudgeBackend,
    min_score: int = DEFAULT_MIN_SCORE,
    concurrency: int = 1,
) -> tuple[list[QIARecord], list[QIARecord], BuildStats]:
    """Generate, verify and partition records, preserving input order on each side."""
    if not 1 <= min_score <= 5:
        raise ValueError(f"min_score must be in 1..5, got {min_score}")
    items = list(inputs)
    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(lambda it: _process(it, gen, judge, min_score), items))
    else:
        results = [_process(it, gen, judge, min_score) for it in items]

    stats = BuildStats(total=len(items), min_score=min_score)
    accepted, rejected = [], []
    for rec, ok, err in results:
        (accepted if ok else rejected).append(rec)
        if err is not None:
            stats.errors += 1
            stats.error_notes[rec.qid] = err
    stats.accepted, stats.rejected = len(accepted), len(rejected)
    return accepted, rejected, stats


def write_jsonl(path, records: Sequence[QIARecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    records: int = 0
    violations: list[tuple[int, str]] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def lines(self) -> list[int]:
        return sorted({ln for ln, _ in self.violations})


def _check_record(obj) -> list[str]:
    if not isinstance(obj, dict):
        return ["record is not a JSON object"]
    problems = []
    missing = [f for f in RECORD_FIELDS if f not in obj]
    extra = sorted(set(obj) - set(RECORD_FIELDS))
    if missing:
        problems.append(f"missing fields {missing}")
    if extra:
        problems.append(f"unknown fields {extra}")
    for f in ("qid", "image_id", "question", "answer", "source_dataset", "split"):
        if f in obj and not isinstance(obj[f], str):
            problems.append(f"{f} must be a string")
    rationale = obj.get("rationale")
    if rationale is not None and not isinstance(rationale, str):
        problems.append("rationale must be a string or null")
    score = obj.get("score")
    if score is not None:
        if isinstance(score, bool) or not isinstance(score, int) or not 1 <= score <= 5:
            problems.append(f"score {score!r} not in 1..5")
        if rationale is None:
            problems.append("score present without a rationale")
    return problems


def validate_jsonl(path) -> ValidationReport:
    """Parse every line and check record invariants, including qid uniqueness.

    Blank lines are ignored. Line numbers are 1-based.
    """
    report = ValidationReport()
    seen: dict[str, int] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            report.violations.append((lineno, f"invalid JSON: {exc.msg}"))
            continue
        report.records += 1
        for problem in _check_record(obj):
            report.violations.append((lineno, problem))
        qid = obj.get("qid") if isinstance(obj, dict) else None
        if isinstance(qid, str):
            if qid in seen:
                report.violations.append((lineno, f"duplicate qid {qid!r} (lines {seen[qid]} and {lineno})"))
            else:
                seen[qid] = lineno
    return report


# ---------------------------------------------------------------- summaries


@dataclass
class ScoreHistogram:
    counts: list[int]
    absent: int

    def as_dict(self) -> dict:
        return {**{str(s): c for s, c in enumerate(self.counts, start=1)}, "absent": self.absent}


def score_histogram(records: Iterable) -> ScoreHistogram:
    counts = [0] * 5
    absent = 0
    for r in records:
        s = r.score if isinstance(r, QIARecord) else r.get("score")
        if s is None:
            absent += 1
        else:
            counts[s - 1] += 1
    return ScoreHistogram(counts, absent)
