"""``groundcot`` command line: one entry point, one subcommand per workflow.

Flags beat environment variables (``GROUNDCOT_SEED``, ``GROUNDCOT_ALPHA``,
``GROUNDCOT_IOU``, ``GROUNDCOT_MIN_SCORE``, ``GROUNDCOT_BACKEND_URL``) which
beat built-in defaults. Failures print a single ``error: <code>: <message>``
line on stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import matio, metrics, rationale, synth
from .numerics import ShapeError, UsageError

DEFAULT_SEED = 7


def _env(name: str, default, cast):
    raw = os.environ.get(name)
    return default if raw is None else cast(raw)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise matio.FormatError(f"{path}:{lineno}: {exc.msg}") from None
    return rows


# ---------------------------------------------------------------- subcommands


def cmd_gen(args) -> None:
    task = synth.generate(args.seed, args.height, args.width, args.dim, args.classes, args.samples, args.signal)
    synth.save_task(task, args.out)


def cmd_train(args) -> None:
    task = synth.load_task(args.task)
    cfg = synth.TrainConfig(layers=args.layers, heads=args.heads)
    result = synth.train_grounding(task, cfg, steps=args.steps, lr=args.lr, seed=args.seed)
    out = Path(args.out)
    matio.save_checkpoint(out / "checkpoint", result.params, result.meta)
    with open(out / "trace.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for row in result.trace:
            fh.write(json.dumps({"step": row.step, "loss": row.loss, "accuracy": row.accuracy}) + "\n")
    (out / "summary.json").write_text(_dump_json({"accuracy": result.accuracy, "loss": result.loss, **result.meta}))


def cmd_ablate(args) -> None:
    task = synth.load_task(args.task)
    alphas = [float(a) for a in args.alphas.split(",")]
    table = {}
    for a in alphas:
        res = synth.train_classifier(task, a, seed=args.seed, steps=args.steps, lr=args.lr)
        table[repr(a)] = res.accuracy
        if args.save_dir:
            matio.save_checkpoint(Path(args.save_dir) / f"alpha_{a!r}", res.params, res.meta)
    _emit(_dump_json({"alphas": alphas, "accuracy": table, "seed": args.seed, "steps": args.steps,
                      "lr": args.lr, "signal": task.signal}), args.out)


def cmd_attend(args) -> None:
    from .region import init_region_params, regional_attention

    task = synth.load_task(args.task)
    if not 0 <= args.sample < task.n:
        raise UsageError(f"sample {args.sample} out of range for {task.n} samples")
    if args.checkpoint:
        params, _ = matio.load_checkpoint(args.checkpoint)
    else:
        params = init_region_params(task.width, args.seed)
    _, weights = regional_attention(task.grids[args.sample], params, task.boxes[args.sample], task.shape, args.alpha)
    matio.write_v2tmat(args.out, weights)


def cmd_eval(args) -> None:
    preds = {str(r["qid"]): str(r.get("text", r.get("answer", ""))) for r in _read_jsonl(args.pred)}
    golds = {str(r["qid"]): str(r.get("answer", r.get("text", ""))) for r in _read_jsonl(args.gold)}
    report = metrics.evaluate_answers(preds, golds, max_n=args.max_n)
    _emit(_dump_json(report.to_dict()), args.out)


def cmd_map(args) -> None:
    dets = [metrics.Detection.from_dict(r) for r in _read_jsonl(args.dets)]
    gts = [metrics.Detection.from_dict(r) for r in _read_jsonl(args.gts)]
    value = metrics.mean_average_precision(dets, gts, args.iou)
    report = metrics.MetricReport(
        metrics={"mAP": value},
        counts={"detections": len(dets), "ground_truths": len(gts), "classes": len({g.label for g in gts})},
        config={"iou_threshold": args.iou, "interpolation": "all-points"},
    )
    _emit(_dump_json(report.to_dict()), args.out)


def read_pairs_csv(path) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise matio.FormatError(f"{path}: row {i + 1} has {len(row)} columns, expected 2")
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError:
                if i == 0:
                    continue  # header
                raise matio.FormatError(f"{path}: row {i + 1} is not numeric") from None
            xs.append(x)
            ys.append(y)
    return xs, ys


def cmd_corr(args) -> None:
    xs, ys = read_pairs_csv(args.csv)
    _emit(_dump_json({"r": metrics.pearson(xs, ys), "n": len(xs)}), args.out)


def _make_backends(args):
    if args.backend_url:
        backend = rationale.HttpBackend(args.backend_url)
        return backend, backend
    gen = rationale.MockGenerator(seed=args.seed)
    if args.scores:
        scores = json.loads(Path(args.scores).read_text(encoding="utf-8"))
        return gen, rationale.ScriptedJudge(scores)
    return gen, rationale.MockJudge()


def cmd_build_rmed(args) -> None:
    items = _read_jsonl(args.input)
    gen, judge = _make_backends(args)
    accepted, rejected, stats = rationale.build_dataset(items, gen, judge, args.min_score, args.concurrency)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rationale.write_jsonl(out / "accepted.jsonl", accepted)
    rationale.write_jsonl(out / "rejected.jsonl", rejected)
    hist = rationale.score_histogram(accepted + rejected)
    (out / "stats.json").write_text(_dump_json({**stats.to_dict(), "histogram": hist.as_dict()}), encoding="utf-8")


def cmd_validate(args) -> None:
    report = rationale.validate_jsonl(args.input)
    _emit(_dump_json({"records": report.records, "valid": report.valid,
                      "violations": [{"line": ln, "problem": p} for ln, p in report.violations]}), args.out)
    if not report.valid:
        raise InvalidRecords(f"{len(report.violations)} violations in {args.input}")


def cmd_heatmap(args) -> None:
    weights = matio.read_v2tmat(args.matrix)
    matio.write_bytes(args.out, matio.attention_heatmap(weights, (args.height, args.width), args.row))


class InvalidRecords(ValueError):
    pass


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="groundcot", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    seed = _env("GROUNDCOT_SEED", DEFAULT_SEED, int)

    g = sub.add_parser("gen", help="generate a planted-region task directory")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=seed)
    g.add_argument("--height", type=int, default=4)
    g.add_argument("--width", type=int, default=4)
    g.add_argument("--dim", type=int, default=8)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--samples", type=int, default=20)
    g.add_argument("--signal", type=float, default=10.0)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train region-phrase grounding on a task")
    t.add_argument("--task", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=seed)
    t.add_argument("--steps", type=int, default=300)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--layers", type=int, default=1)
    t.add_argument("--heads", type=int, default=2)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", help="held-out accuracy per blend weight")
    a.add_argument("--task", required=True)
    a.add_argument("--alphas", default="0,0.5,1")
    a.add_argument("--seed", type=int, default=seed)
    a.add_argument("--steps", type=int, default=300)
    a.add_argument("--lr", type=float, default=0.2)
    a.add_argument("--out")
    a.add_argument("--save-dir")
    a.set_defaults(func=cmd_ablate)

    at = sub.add_parser("attend", help="export blended attention weights for one sample")
    at.add_argument("--task", required=True)
    at.add_argument("--sample", type=int, default=0)
    at.add_argument("--alpha", type=float, default=_env("GROUNDCOT_ALPHA", 0.5, float))
    at.add_argument("--seed", type=int, default=seed)
    at.add_argument("--checkpoint")
    at.add_argument("--out", required=True)
    at.set_defaults(func=cmd_attend)

    e = sub.add_parser("eval", help="answer metrics over prediction/gold JSONL")
    e.add_argument("--pred", required=True)
    e.add_argument("--gold", required=True)
    e.add_argument("--max-n", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("map", help="detection mAP over JSONL detections and ground truth")
    m.add_argument("--dets", required=True)
    m.add_argument("--gts", required=True)
    m.add_argument("--iou", type=float, default=_env("GROUNDCOT_IOU", metrics.DEFAULT_IOU, float))
    m.add_argument("--out")
    m.set_defaults(func=cmd_map)

    c = sub.add_parser("corr", help="Pearson r over a two-column CSV")
    c.add_argument("--csv", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_corr)

    b = sub.add_parser("build-rmed", help="generate and verify rationale records")
    b.add_argument("--input", required=True)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--min-score", type=int, default=_env("GROUNDCOT_MIN_SCORE", rationale.DEFAULT_MIN_SCORE, int))
    b.add_argument("--seed", type=int, default=seed)
    b.add_argument("--backend-url", default=os.environ.get("GROUNDCOT_BACKEND_URL"))
    b.add_argument("--scores", help="JSON map question -> judge score (scripted judge)")
    b.add_argument("--concurrency", type=int, default=1)
    b.set_defaults(func=cmd_build_rmed)

    v = sub.add_parser("validate", help="check a QIA JSONL file")
    v.add_argument("--input", required=True)
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    h = sub.add_parser("heatmap", help="render an attention row (or row mean) as PGM")
    h.add_argument("--matrix", required=True)
    h.add_argument("--height", type=int, required=True)
    h.add_argument("--width", type=int, required=True)
    h.add_argument("--row", type=int)
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_heatmap)
    return p


_ERROR_CODES = (
    (ShapeError, "shape_error"),
    (UsageError, "usage_error"),
    (matio.FormatError, "format_error"),
    (metrics.MetricError, "metric_error"),
    (InvalidRecords, "invalid_records"),
    (synth.TrainingDiverged, "diverged"),
    (FileNotFoundError, "not_found"),
    (OSError, "io_error"),
    (KeyError, "missing_field"),
    (ValueError, "invalid_argument"),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:
        for cls, code in _ERROR_CODES:
            if isinstance(exc, cls):
                msg = " ".join(str(exc).split()) or type(exc).__name__
                print(f"error: {code}: {msg}", file=sys.stderr)
                return 2
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
