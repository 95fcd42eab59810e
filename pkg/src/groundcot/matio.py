"""Text matrix format, parameter checkpoints and PGM heatmaps.

V2TMAT layout::

    V2TMAT <rows> <cols>
    <cols reals separated by single spaces>   (x rows)

Reals are written with Python's shortest round-trip ``repr`` so a
write/read/write cycle is byte-identical.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .numerics import ShapeError, matrix

MAGIC = "V2TMAT"
CHECKPOINT_FORMAT = "v2t-checkpoint"


class FormatError(ValueError):
    pass


def format_v2tmat(m) -> str:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"V2TMAT holds 2-D matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("V2TMAT entries must be finite")
    lines = [f"{MAGIC} {arr.shape[0]} {arr.shape[1]}"]
    for row in arr:
        lines.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def parse_v2tmat(text: str) -> np.ndarray:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty V2TMAT input")
    head = lines[0].split(" ")
    if len(head) != 3 or head[0] != MAGIC:
        raise FormatError(f"bad V2TMAT header: {lines[0]!r}")
    try:
        rows, cols = int(head[1]), int(head[2])
    except ValueError:
        raise FormatError(f"bad V2TMAT header: {lines[0]!r}") from None
    if rows < 0 or cols < 0:
        raise FormatError(f"negative V2TMAT shape {rows}x{cols}")
    body = lines[1:]
    if len(body) != rows:
        raise FormatError(f"expected {rows} data lines, found {len(body)}")
    data = np.empty((rows, cols))
    for i, line in enumerate(body):
        fields = line.split(" ") if cols else ([] if line == "" else [line])
        if len(fields) != cols:
            raise FormatError(f"line {i + 2}: expected {cols} values, found {len(fields)}")
        try:
            data[i] = [float(f) for f in fields]
        except ValueError as exc:
            raise FormatError(f"line {i + 2}: {exc}") from None
    return matrix(data)


def write_v2tmat(path, m) -> None:
    Path(path).write_text(format_v2tmat(m), encoding="ascii")


def read_v2tmat(path) -> np.ndarray:
    return parse_v2tmat(Path(path).read_text(encoding="ascii"))


# ---------------------------------------------------------------- checkpoints


def _param_filename(name: str) -> str:
    return name.replace("/", "_") + ".v2tmat"


def save_checkpoint(directory, params: dict, meta: dict) -> None:
    """Write each parameter as V2TMAT plus a sorted JSON manifest.

    ``meta`` carries the architecture description (layer count, head count,
    width, ...). Vector parameters are stored as 1 x n matrices and the
    original shape is recorded so loading restores it.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name in sorted(params):
        value = np.asarray(params[name], dtype=np.float64)
        fname = _param_filename(name)
        write_v2tmat(directory / fname, value)
        entries[name] = {"file": fname, "shape": list(value.shape)}
    manifest = {"format": CHECKPOINT_FORMAT, "version": 1, **meta, "params": entries}
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_checkpoint(directory) -> tuple[dict, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{directory}: not a checkpoint manifest")
    params = {}
    for name, entry in manifest["params"].items():
        m = read_v2tmat(directory / entry["file"])
        params[name] = np.array(m).reshape(entry["shape"])
    meta = {k: v for k, v in manifest.items() if k not in ("format", "version", "params")}
    return params, meta


# ---------------------------------------------------------------- heatmaps


def heatmap_pixels(values, shape: tuple[int, int]) -> np.ndarray:
    """Linear rescale min->0, max->255 (half-up rounding); flat input -> 128."""
    h, w = shape
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size != h * w:
        raise ShapeError(f"{v.size} weights do not fill a {h}x{w} grid")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full((h, w), 128, dtype=np.uint8)
    scaled = np.floor((v - lo) / (hi - lo) * 255.0 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8).reshape(h, w)


def encode_pgm(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.astype(np.uint8).tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise FormatError("not a binary PGM with maxval 255")
    w, h = (int(x) for x in parts[1].split())
    pix = np.frombuffer(parts[3], dtype=np.uint8)
    if pix.size != w * h:
        raise FormatError("PGM pixel count does not match header")
    return pix.reshape(h, w)


def attention_heatmap(weights, shape: tuple[int, int], row: int | None = None) -> bytes:
    """PGM for one query row of an attention matrix, or the row mean if ``row`` is None."""
    w = np.asarray(weights, dtype=np.float64)
    h_, w_ = shape
    if w.ndim != 2 or w.shape[1] != h_ * w_:
        raise ShapeError(f"attention matrix {w.shape} does not match a {h_}x{w_} grid")
    if row is None:
        vec = w.mean(axis=0)
    else:
        if not 0 <= row < w.shape[0]:
            raise ShapeError(f"row {row} out of range for {w.shape[0]} query rows")
        vec = w[row]
    return encode_pgm(heatmap_pixels(vec, shape))


def write_bytes(path, data: bytes) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    path.write_bytes(data)
