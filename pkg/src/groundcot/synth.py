"""Planted-region benchmark and the toy training loops that run on it.

Each sample is an ``H x W`` grid of standard-normal tokens. One box per
sample gets a class prototype added with weight ``signal``; every other
token is pure background. Prototypes are orthonormal, and the phrase
embeddings handed to the text side are the prototypes plus a little noise.

Two experiments sit on top:

* :func:`train_grounding` fits the fusion stack so that in-box tokens score
  highest against their class phrase.
* :func:`ablate_alpha` trains blended attention plus the text head as a
  classifier at several blend weights, using the true boxes. ``alpha = 0``
  is the arm without regional attention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matio
from .fusion import FusionConfig, fuse_stack, init_fusion
from .grounding import alignment_scores, batched_grounding_loss
from .numerics import Tape, UsageError, cross_entropy, gather_rows
from .region import RegionBox, regional_attention, init_region_params
from .textcot import TextCotConfig, classify, init_textcot

PHRASE_NOISE = 0.05
TEST_FRACTION = 0.2


@dataclass
class PlantedTask:
    shape: tuple[int, int]
    width: int
    classes: int
    seed: int
    signal: float
    grids: np.ndarray  # (n, H*W, d)
    boxes: list[RegionBox]
    labels: np.ndarray  # (n,)
    prototypes: np.ndarray  # (C, d)
    phrases: np.ndarray  # (C, d)

    @property
    def n(self) -> int:
        return len(self.labels)

    def region_indices(self, which=None) -> np.ndarray:
        which = range(self.n) if which is None else which
        return np.array([self.boxes[i].indices(self.shape) for i in which], dtype=np.intp)

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        """Seeded 80/20 (train, test) split of sample indices."""
        perm = np.random.default_rng([self.seed, 1]).permutation(self.n)
        n_test = max(1, int(round(TEST_FRACTION * self.n)))
        if n_test >= self.n:
            raise UsageError(f"{self.n} samples are too few to split")
        return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _box_size(shape):
    return max(1, shape[0] // 2), max(1, shape[1] // 2)


def _build(seed, H, W, d, C, n, s) -> PlantedTask:
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, C)))
    prototypes = q[:, :C].T.copy()
    phrases = prototypes + PHRASE_NOISE * rng.standard_normal((C, d))
    bh, bw = _box_size((H, W))
    grids = np.empty((n, H * W, d))
    boxes, labels = [], np.empty(n, dtype=np.int64)
    for i in range(n):
        labels[i] = rng.integers(C)
        y0 = int(rng.integers(H - bh + 1))
        x0 = int(rng.integers(W - bw + 1))
        box = RegionBox(x0, y0, x0 + bw, y0 + bh)
        grid = rng.standard_normal((H * W, d))
        grid[box.indices((H, W))] += s * prototypes[labels[i]]
        grids[i] = grid
        boxes.append(box)
    return PlantedTask((H, W), d, C, seed, float(s), grids, boxes, labels, prototypes, phrases)


def generate(seed: int, H: int, W: int, d: int, classes: int, samples: int, signal: float) -> PlantedTask:
    """Seeded planted-region task; identical seeds give identical arrays."""
    if not signal > 0:
        raise ValueError(f"signal strength must be positive, got {signal}")
    if H < 1 or W < 1 or H * W < 4:
        raise ValueError(f"grid {H}x{W} must hold at least 4 tokens")
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if classes > d:
        raise ValueError(f"{classes} orthonormal prototypes do not fit in width {d}")
    if samples < 1:
        raise ValueError("need at least one sample")
    return _build(seed, H, W, d, classes, samples, signal)


def null_task(seed: int, H: int, W: int, d: int, classes: int, samples: int) -> PlantedTask:
    """Same layout as :func:`generate` with no signal planted (a chance-level control)."""
    generate(seed, H, W, d, classes, samples, 1.0)  # argument validation
    return _build(seed, H, W, d, classes, samples, 0.0)


# ---------------------------------------------------------------- persistence


def save_task(task: PlantedTask, directory) -> None:
    """Manifest JSON, one V2TMAT per grid, and a JSONL of labels and boxes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "planted-task",
        "shape": list(task.shape),
        "width": task.width,
        "classes": task.classes,
        "seed": task.seed,
        "signal": task.signal,
        "samples": task.n,
        "prototypes": "prototypes.v2tmat",
        "phrases": "phrases.v2tmat",
        "labels": "samples.jsonl",
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    matio.write_v2tmat(directory / "prototypes.v2tmat", task.prototypes)
    matio.write_v2tmat(directory / "phrases.v2tmat", task.phrases)
    with open(directory / "samples.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for i in range(task.n):
            name = f"grid_{i:05d}.v2tmat"
            matio.write_v2tmat(directory / name, task.grids[i])
            row = {"index": i, "label": int(task.labels[i]), "box": task.boxes[i].as_dict(), "grid": name}
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_task(directory) -> PlantedTask:
    directory = Path(directory)
    m = json.loads((directory / "manifest.json").read_text())
    if m.get("format") != "planted-task":
        raise ValueError(f"{directory} does not hold a planted task")
    rows = [json.loads(line) for line in (directory / m["labels"]).read_text().splitlines() if line]
    grids = np.stack([np.array(matio.read_v2tmat(directory / r["grid"])) for r in rows])
    return PlantedTask(
        shape=tuple(m["shape"]),
        width=m["width"],
        classes=m["classes"],
        seed=m["seed"],
        signal=m["signal"],
        grids=grids,
        boxes=[RegionBox(**r["box"]) for r in rows],
        labels=np.array([r["label"] for r in rows], dtype=np.int64),
        prototypes=np.array(matio.read_v2tmat(directory / m["prototypes"])),
        phrases=np.array(matio.read_v2tmat(directory / m["phrases"])),
    )


# ---------------------------------------------------------------- training


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    layers: int = 1
    heads: int = 2
    alpha: float = 0.5


@dataclass
class TraceRow:
    step: int
    loss: float
    accuracy: float


@dataclass
class TrainResult:
    trace: list[TraceRow]
    params: dict
    accuracy: float
    loss: float
    meta: dict = field(default_factory=dict)


def _sgd(params: dict, grads: dict, lr: float) -> dict:
    return {k: params[k] - lr * grads[k] for k in params}


def _run_gd(loss_fn, eval_fn, params, steps, lr, what):
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    trace = []
    for step in range(steps):
        tape = Tape()
        vars_ = {k: tape.variable(v) for k, v in params.items()}
        loss = loss_fn(vars_)
        value = float(loss.value)
        if not math.isfinite(value):
            raise TrainingDiverged(f"{what}: loss became {value} at step {step} (lr={lr})")
        names = list(vars_)
        grads = dict(zip(names, tape.gradient(loss, [vars_[k] for k in names])))
        trace.append(TraceRow(step, value, eval_fn(params)))
        params = _sgd(params, grads, lr)
    final_loss = float(loss_fn(params))
    if not math.isfinite(final_loss):
        raise TrainingDiverged(f"{what}: final loss is {final_loss} (lr={lr})")
    return trace, params, final_loss


def matching_accuracy(task: PlantedTask, params: dict, cfg: FusionConfig, which) -> float:
    """Share of in-box tokens whose best-scoring phrase is the planted class."""
    v, t = fuse_stack(task.grids[which], task.phrases, cfg, params)
    scores = alignment_scores(v, t)  # (B, HW, C)
    idx = task.region_indices(which)
    best = np.argmax(np.take_along_axis(scores, idx[..., None], axis=1), axis=-1)
    return float(np.mean(best == task.labels[which][:, None]))


def train_grounding(task: PlantedTask, cfg: TrainConfig = TrainConfig(), steps: int = 300,
                    lr: float = 0.1, seed: int = 0) -> TrainResult:
    """Full-batch gradient descent on the grounding loss through the fusion stack.

    The trace records the training loss and held-out matching accuracy at
    each step before the update; ``result.accuracy`` is the held-out
    accuracy after the last step.
    """
    fcfg = FusionConfig(layers=cfg.layers, heads=cfg.heads, width=task.width)
    train, test = task.split()
    idx = task.region_indices(train)
    targets = np.repeat(task.labels[train][:, None], idx.shape[1], axis=1)
    x = task.grids[train]

    def loss_fn(p):
        v, t = fuse_stack(x, task.phrases, fcfg, p)
        return batched_grounding_loss(alignment_scores(v, t), idx, targets)

    trace, params, final_loss = _run_gd(
        loss_fn, lambda p: matching_accuracy(task, p, fcfg, test), init_fusion(fcfg, seed), steps, lr, "train_grounding"
    )
    return TrainResult(trace, params, matching_accuracy(task, params, fcfg, test), final_loss,
                       meta={**fcfg.meta(), "steps": steps, "lr": lr, "seed": seed})


# ---------------------------------------------------------------- ablation


def _text_config(task: PlantedTask) -> TextCotConfig:
    return TextCotConfig(layers=1, heads=2 if task.width % 2 == 0 else 1, width=task.width, classes=task.classes)


def answer_logits(task: PlantedTask, params: dict, which, alpha: float):
    """Blended attention over each grid, then the text head reads out class logits."""
    x = task.grids[which]
    boxes = [task.boxes[i] for i in which]
    attended, _ = regional_attention(x, params, boxes, task.shape, alpha)
    v_regional = gather_rows(attended, task.region_indices(which))
    return classify(task.phrases, v_regional, attended, params, _text_config(task))


def classification_accuracy(task: PlantedTask, params: dict, which, alpha: float) -> float:
    logits = answer_logits(task, params, which, alpha)
    return float(np.mean(np.argmax(logits, axis=-1) == task.labels[which]))


def train_classifier(task: PlantedTask, alpha: float, seed: int = 0, steps: int = 150, lr: float = 0.2) -> TrainResult:
    train, test = task.split()
    params = {**init_region_params(task.width, seed), **init_textcot(_text_config(task), seed + 1)}

    def loss_fn(p):
        return cross_entropy(answer_logits(task, p, train, alpha), task.labels[train])

    trace, params, final_loss = _run_gd(
        loss_fn, lambda p: classification_accuracy(task, p, test, alpha), params, steps, lr, f"alpha={alpha}"
    )
    return TrainResult(trace, params, classification_accuracy(task, params, test, alpha), final_loss,
                       meta={"alpha": alpha, "steps": steps, "lr": lr, "seed": seed})


def ablate_alpha(task: PlantedTask, alphas, seed: int = 0, steps: int = 150, lr: float = 0.2) -> dict[float, float]:
    """Held-out classification accuracy per blend weight, same initialisation for every arm."""
    alphas = [float(a) for a in alphas]
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha {a} outside [0, 1]")
    return {a: train_classifier(task, a, seed, steps, lr).accuracy for a in alphas}
