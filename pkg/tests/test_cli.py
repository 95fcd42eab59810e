import json
import subprocess
import sys

import numpy as np
import pytest

from groundcot import matio
from groundcot.cli import main

import fixtures


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def task_dir(tmp_path, capsys):
    d = tmp_path / "task"
    assert run(["gen", "--out", d, "--seed", 3, "--samples", 10, "--signal", 10], capsys)[0] == 0
    return d


def test_gen_is_byte_identical(tmp_path, capsys, task_dir):
    run(["gen", "--out", tmp_path / "again", "--seed", 3, "--samples", 10, "--signal", 10], capsys)
    assert _tree_bytes(task_dir) == _tree_bytes(tmp_path / "again")
    assert (task_dir / "manifest.json").exists() and (task_dir / "grid_00009.v2tmat").exists()


def test_gen_rejects_zero_signal(tmp_path, capsys):
    code, _, err = run(["gen", "--out", tmp_path / "z", "--signal", 0], capsys)
    assert code == 2
    assert err.startswith("error: invalid_argument: ") and err.count("\n") == 1


def test_train_writes_checkpoint_and_trace(tmp_path, capsys, task_dir):
    for name in ("a", "b"):
        assert run(["train", "--task", task_dir, "--out", tmp_path / name, "--steps", 3, "--seed", 1], capsys)[0] == 0
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")
    params, meta = matio.load_checkpoint(tmp_path / "a" / "checkpoint")
    assert meta["steps"] == 3 and "layer0.t2i.wq" in params
    trace = [json.loads(line) for line in (tmp_path / "a" / "trace.jsonl").read_text().splitlines()]
    assert [r["step"] for r in trace] == [0, 1, 2]


def test_ablate_table(tmp_path, capsys, task_dir):
    argv = ["ablate", "--task", task_dir, "--alphas", "0,1", "--steps", 2, "--save-dir", tmp_path / "ck"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    table = json.loads(out)
    assert set(table["accuracy"]) == {"0.0", "1.0"}
    assert (tmp_path / "ck" / "alpha_0.0" / "manifest.json").exists()
    assert run(argv, capsys)[1] == out


def test_attend_and_heatmap(tmp_path, capsys, task_dir):
    w_path = tmp_path / "w.v2tmat"
    assert run(["attend", "--task", task_dir, "--sample", 2, "--alpha", 0.5, "--out", w_path], capsys)[0] == 0
    w = matio.read_v2tmat(w_path)
    assert w.shape == (16, 16)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert run(["heatmap", "--matrix", w_path, "--height", 4, "--width", 4, "--out", tmp_path / "h.pgm"], capsys)[0] == 0
    img = matio.decode_pgm((tmp_path / "h.pgm").read_bytes())
    assert img.shape == (4, 4) and img.min() == 0 and img.max() == 255
    code, _, err = run(["heatmap", "--matrix", w_path, "--height", 3, "--width", 4, "--out", tmp_path / "x.pgm"], capsys)
    assert code == 2 and err.startswith("error: shape_error: ")
    code, _, err = run(["attend", "--task", task_dir, "--sample", 99, "--out", w_path], capsys)
    assert code == 2 and err.startswith("error: usage_error: ")


def test_alpha_from_environment(tmp_path, capsys, task_dir, monkeypatch):
    monkeypatch.setenv("GROUNDCOT_ALPHA", "0")
    run(["attend", "--task", task_dir, "--out", tmp_path / "env.v2tmat"], capsys)
    run(["attend", "--task", task_dir, "--alpha", 0.0, "--out", tmp_path / "flag.v2tmat"], capsys)
    run(["attend", "--task", task_dir, "--alpha", 1.0, "--out", tmp_path / "one.v2tmat"], capsys)
    assert (tmp_path / "env.v2tmat").read_bytes() == (tmp_path / "flag.v2tmat").read_bytes()
    assert (tmp_path / "env.v2tmat").read_bytes() != (tmp_path / "one.v2tmat").read_bytes()


def _write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def test_eval_report(tmp_path, capsys):
    _write_jsonl(tmp_path / "p.jsonl", [{"qid": q, "text": t} for q, t in fixtures.CLOSED_PREDS.items()])
    _write_jsonl(tmp_path / "g.jsonl", [{"qid": q, "answer": t} for q, t in fixtures.CLOSED_GOLDS.items()])
    code, out, _ = run(["eval", "--pred", tmp_path / "p.jsonl", "--gold", tmp_path / "g.jsonl"], capsys)
    assert code == 0
    assert json.loads(out)["metrics"]["accuracy"] == 0.7
    _write_jsonl(tmp_path / "short.jsonl", [{"qid": "q01", "text": "yes"}])
    code, _, err = run(["eval", "--pred", tmp_path / "short.jsonl", "--gold", tmp_path / "g.jsonl"], capsys)
    assert code == 2 and err.startswith("error: metric_error: ") and "q02" in err


def test_map_report(tmp_path, capsys, monkeypatch):
    def rows(ds):
        return [{"image_id": d.image_id, "box": list(d.box), "label": d.label, "confidence": d.confidence} for d in ds]

    _write_jsonl(tmp_path / "d.jsonl", rows(fixtures.MAP_DETS))
    _write_jsonl(tmp_path / "g.jsonl", rows(fixtures.MAP_GTS))
    code, out, _ = run(["map", "--dets", tmp_path / "d.jsonl", "--gts", tmp_path / "g.jsonl"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["metrics"]["mAP"] == pytest.approx(5 / 6, abs=1e-15)
    assert rep["config"]["iou_threshold"] == 0.5
    monkeypatch.setenv("GROUNDCOT_IOU", "0.3")
    _, out, _ = run(["map", "--dets", tmp_path / "d.jsonl", "--gts", tmp_path / "g.jsonl"], capsys)
    assert json.loads(out)["config"]["iou_threshold"] == 0.3
    _, out, _ = run(["map", "--dets", tmp_path / "d.jsonl", "--gts", tmp_path / "g.jsonl", "--iou", 0.7], capsys)
    assert json.loads(out)["config"]["iou_threshold"] == 0.7


def test_corr_with_and_without_header(tmp_path, capsys):
    body = "".join(f"{x},{y}\n" for x, y in fixtures.BODY_REGION_PAIRS)
    (tmp_path / "h.csv").write_text("mAP,accuracy\n" + body)
    (tmp_path / "n.csv").write_text(body)
    outs = [run(["corr", "--csv", tmp_path / f], capsys)[1] for f in ("h.csv", "n.csv")]
    assert outs[0] == outs[1]
    assert json.loads(outs[0]) == {"n": 5, "r": pytest.approx(fixtures.BODY_REGION_R, abs=1e-12)}
    (tmp_path / "flat.csv").write_text("1,2\n1,3\n1,4\n")
    code, _, err = run(["corr", "--csv", tmp_path / "flat.csv"], capsys)
    assert code == 2 and err.startswith("error: metric_error: ")
    (tmp_path / "bad.csv").write_text("1,2\nx,3\n")
    assert run(["corr", "--csv", tmp_path / "bad.csv"], capsys)[2].startswith("error: format_error: ")


def test_build_rmed_and_validate(tmp_path, capsys):
    _write_jsonl(tmp_path / "in.jsonl", fixtures.rationale_inputs(25))
    for name in ("a", "b"):
        argv = ["build-rmed", "--input", tmp_path / "in.jsonl", "--out-dir", tmp_path / name, "--concurrency", 4]
        assert run(argv, capsys)[0] == 0
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")
    stats = json.loads((tmp_path / "a" / "stats.json").read_text())
    assert stats["accepted"] == 25 and stats["histogram"]["5"] == 25
    code, out, _ = run(["validate", "--input", tmp_path / "a" / "accepted.jsonl"], capsys)
    assert code == 0 and json.loads(out)["valid"]
    (tmp_path / "bad.jsonl").write_text('{"qid": 1}\n')
    code, out, err = run(["validate", "--input", tmp_path / "bad.jsonl"], capsys)
    assert code == 2 and err.startswith("error: invalid_records: ")
    assert json.loads(out)["violations"][0]["line"] == 1


def test_build_rmed_scripted_scores(tmp_path, capsys, monkeypatch):
    rows = [{"qid": f"s{i}", "image_id": "img", "question": q} for i, q in enumerate(fixtures.SCRIPTED_QUESTIONS)]
    _write_jsonl(tmp_path / "in.jsonl", rows)
    (tmp_path / "scores.json").write_text(json.dumps(fixtures.SCRIPTED_SCORES))
    monkeypatch.setenv("GROUNDCOT_MIN_SCORE", "4")
    argv = ["build-rmed", "--input", tmp_path / "in.jsonl", "--out-dir", tmp_path / "o", "--scores", tmp_path / "scores.json"]
    run(argv, capsys)
    assert json.loads((tmp_path / "o" / "stats.json").read_text())["accepted"] == 4
    run(argv + ["--min-score", 3], capsys)
    acc = [json.loads(line)["question"] for line in (tmp_path / "o" / "accepted.jsonl").read_text().splitlines()]
    assert set(acc) == fixtures.SCRIPTED_ACCEPTED


def test_missing_file_error_line(tmp_path, capsys):
    code, out, err = run(["corr", "--csv", tmp_path / "nope.csv"], capsys)
    assert code == 2 and out == ""
    assert err.startswith("error: not_found: ") and err.count("\n") == 1


def test_module_entry_point(tmp_path):
    (tmp_path / "c.csv").write_text("1,2\n2,4\n3,7\n")
    proc = subprocess.run([sys.executable, "-m", "groundcot", "corr", "--csv", str(tmp_path / "c.csv")],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["n"] == 3
