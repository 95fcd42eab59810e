"""Dense float64 matrix kernel with a reverse-mode gradient tape.

Every op accepts plain numpy arrays or :class:`Var` handles. With plain
arrays the op is a pure numpy computation; when any argument is a ``Var``
the result is recorded on that variable's :class:`Tape` so adjoints can be
replayed later. Arrays may carry leading batch axes; "rows" always means the
second-to-last axis and "columns" the last one.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "UsageError",
    "Var",
    "Tape",
    "matrix",
    "value_of",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "transpose",
    "softmax_rows",
    "gelu",
    "layer_norm",
    "total",
    "mean",
    "mean_rows",
    "reshape",
    "take_cols",
    "concat_cols",
    "concat_rows",
    "gather_rows",
    "cross_entropy",
    "mlp2",
    "grad",
    "check_gradient",
]


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class UsageError(ValueError):
    """An API was called outside its contract."""


def matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Build a read-only float64 ``rows x cols`` matrix, rejecting NaN/Inf."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 1 and rows is not None and cols is not None:
        if arr.size != rows * cols:
            raise ShapeError(f"data length {arr.size} != {rows} x {cols}")
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    if (rows is not None and arr.shape[0] != rows) or (cols is not None and arr.shape[1] != cols):
        raise ShapeError(f"expected shape ({rows}, {cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    arr.setflags(write=False)
    return arr


class Var:
    """A value recorded on a tape."""

    __slots__ = ("value", "tape")
    __array_priority__ = 1000

    def __init__(self, value: np.ndarray, tape: "Tape"):
        self.value = value
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise UsageError("division by a recorded value is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


class Tape:
    """Ordered record of primitive ops; rebuilt for every forward pass."""

    def __init__(self):
        self._nodes: list[tuple[str, Var, tuple, Callable]] = []
        self.backward_order: list[int] = []

    def variable(self, value) -> Var:
        return Var(np.array(value, dtype=np.float64), self)

    def __len__(self):
        return len(self._nodes)

    @property
    def op_names(self) -> list[str]:
        return [name for name, *_ in self._nodes]

    def _record(self, name, value, parents, backward) -> Var:
        out = Var(value, self)
        self._nodes.append((name, out, parents, backward))
        return out

    def gradient(self, output: Var, wrt: Sequence[Var]) -> list[np.ndarray]:
        if not isinstance(output, Var) or output.tape is not self:
            raise UsageError("output was not recorded on this tape")
        if output.value.size != 1:
            raise UsageError(f"gradient needs a scalar output, got shape {output.value.shape}")
        for w in wrt:
            if not isinstance(w, Var) or w.tape is not self:
                raise UsageError("gradient requested for a value not on this tape")
        adj = {id(output): np.ones_like(output.value)}
        self.backward_order = []
        for idx in range(len(self._nodes) - 1, -1, -1):
            _, out, parents, backward = self._nodes[idx]
            g = adj.pop(id(out), None)
            if g is None:
                continue
            self.backward_order.append(idx)
            for p, gp in zip(parents, backward(g)):
                if isinstance(p, Var) and gp is not None:
                    gp = _unbroadcast(gp, p.value.shape)
                    if id(p) in adj:
                        adj[id(p)] = adj[id(p)] + gp
                    else:
                        adj[id(p)] = gp
        return [adj.get(id(w), np.zeros_like(w.value)) for w in wrt]


def value_of(x) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise UsageError("operands were recorded on different tapes")
    return tape


def _emit(name, value, parents, backward):
    tape = _tape_of(*parents)
    if tape is None:
        return value
    return tape._record(name, value, tuple(parents), backward)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# ---------------------------------------------------------------- primitives


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    return _emit(
        "matmul",
        np.matmul(av, bv),
        (a, b),
        lambda g: (np.matmul(g, _swap(bv)), np.matmul(_swap(av), g)),
    )


def _check_broadcast(name, av, bv):
    try:
        np.broadcast_shapes(av.shape, bv.shape)
    except ValueError:
        raise ShapeError(f"{name} shape mismatch: {av.shape} vs {bv.shape}") from None


def add(a, b):
    av, bv = value_of(a), value_of(b)
    _check_broadcast("add", av, bv)
    return _emit("add", av + bv, (a, b), lambda g: (g, g))


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    _check_broadcast("sub", av, bv)
    return _emit("sub", av - bv, (a, b), lambda g: (g, -g))


def mul(a, b):
    """Elementwise product; a python scalar on either side is a plain scale."""
    av, bv = value_of(a), value_of(b)
    _check_broadcast("mul", av, bv)
    return _emit("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def neg(a):
    return _emit("neg", -value_of(a), (a,), lambda g: (-g,))


def transpose(a):
    return _emit("transpose", _swap(value_of(a)), (a,), lambda g: (_swap(g),))


def softmax_rows(m):
    """Softmax along the last axis, stabilised by subtracting the row max."""
    mv = value_of(m)
    if mv.size == 0:
        raise ShapeError("softmax_rows of an empty matrix")
    z = np.exp(mv - mv.max(axis=-1, keepdims=True))
    y = z / z.sum(axis=-1, keepdims=True)
    return _emit(
        "softmax_rows",
        y,
        (m,),
        lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),),
    )


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    """GELU, tanh approximation."""
    xv = value_of(x)
    u = _GELU_C * (xv + 0.044715 * xv**3)
    th = np.tanh(u)
    y = 0.5 * xv * (1.0 + th)

    def backward(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * xv**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * xv * (1.0 - th**2) * du),)

    return _emit("gelu", y, (x,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5):
    """Per-token normalisation over the last axis, then affine."""
    xv, gv, bv = value_of(x), value_of(gain), value_of(bias)
    d = xv.shape[-1]
    if gv.shape[-1] != d or bv.shape[-1] != d:
        raise ShapeError(f"layer_norm gain/bias {gv.shape}/{bv.shape} vs width {d}")
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    y = xhat * gv + bv

    def backward(g):
        gx_hat = g * gv
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, g * xhat, g

    return _emit("layer_norm", y, (x, gain, bias), backward)


def total(a):
    av = value_of(a)
    return _emit("sum", np.array(av.sum()), (a,), lambda g: (np.broadcast_to(g, av.shape),))


def mean(a):
    av = value_of(a)
    n = av.size
    return _emit("mean", np.array(av.mean()), (a,), lambda g: (np.broadcast_to(g / n, av.shape),))


def mean_rows(a):
    """Average over the row (token) axis; (..., n, d) -> (..., d)."""
    av = value_of(a)
    n = av.shape[-2]
    return _emit(
        "mean_rows",
        av.mean(axis=-2),
        (a,),
        lambda g: (np.broadcast_to(np.expand_dims(g, -2) / n, av.shape),),
    )


def reshape(a, shape):
    av = value_of(a)
    return _emit("reshape", av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def take_cols(a, start: int, stop: int):
    av = value_of(a)

    def backward(g):
        out = np.zeros(av.shape)
        out[..., start:stop] = g
        return (out,)

    return _emit("take_cols", av[..., start:stop], (a,), backward)


def _concat(name, parts, axis):
    vals = [value_of(p) for p in parts]
    try:
        y = np.concatenate(vals, axis=axis)
    except ValueError:
        raise ShapeError(f"{name} shape mismatch: {[v.shape for v in vals]}") from None
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return _emit(name, y, tuple(parts), lambda g: tuple(np.split(g, bounds, axis=axis)))


def concat_cols(parts):
    return _concat("concat_cols", parts, -1)


def concat_rows(parts):
    return _concat("concat_rows", parts, -2)


def gather_rows(x, idx):
    """Select rows by integer index.

    ``x`` is (n, d) with ``idx`` (k,), or batched (b, n, d) with ``idx`` (b, k).
    """
    xv = value_of(x)
    idx = np.asarray(idx, dtype=np.intp)
    if xv.ndim == 2:
        y = xv[idx]
    else:
        y = np.take_along_axis(xv, idx[..., None], axis=-2)

    def backward(g):
        out = np.zeros(xv.shape)
        if xv.ndim == 2:
            np.add.at(out, idx, g)
        else:
            for b in range(xv.shape[0]):
                np.add.at(out[b], idx[b], g[b])
        return (out,)

    return _emit("gather_rows", y, (x,), backward)


def cross_entropy(logits, targets):
    """Mean softmax cross-entropy of each row against an integer target."""
    lv = value_of(logits)
    t = np.asarray(targets, dtype=np.intp)
    if lv.ndim != 2 or t.shape != (lv.shape[0],):
        raise ShapeError(f"cross_entropy logits {lv.shape} vs targets {t.shape}")
    if lv.shape[0] == 0:
        raise UsageError("cross_entropy over zero rows")
    shifted = lv - lv.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(lv.shape[0])
    loss = np.array(np.mean(logz - shifted[rows, t]))

    def backward(g):
        p = np.exp(shifted - logz[:, None])
        p[rows, t] -= 1.0
        return (g * p / lv.shape[0],)

    return _emit("cross_entropy", loss, (logits,), backward)


def mlp2(x, w1, b1, w2, b2):
    """Two linear layers with a GELU between them."""
    xv, w1v, b1v, w2v, b2v = (value_of(a) for a in (x, w1, b1, w2, b2))
    if w1v.shape[-1] != b1v.shape[-1] or w2v.shape[-2] != w1v.shape[-1] or w2v.shape[-1] != b2v.shape[-1]:
        raise ShapeError(
            f"mlp2 parameter shapes do not chain: w1 {w1v.shape}, b1 {b1v.shape}, "
            f"w2 {w2v.shape}, b2 {b2v.shape}"
        )
    return add(matmul(gelu(add(matmul(x, w1), b1)), w2), b2)


# ---------------------------------------------------------------- gradients


def grad(f: Callable, at: Mapping[str, np.ndarray]) -> tuple[float, dict[str, np.ndarray]]:
    """Evaluate ``f(params)`` once on a fresh tape; return value and adjoints."""
    tape = Tape()
    params = {k: tape.variable(v) for k, v in at.items()}
    out = f(params)
    if not isinstance(out, Var):
        raise UsageError("f did not produce a recorded value; does it use its parameters?")
    names = list(params)
    grads = tape.gradient(out, [params[k] for k in names])
    return float(out.value), dict(zip(names, grads))


def check_gradient(f: Callable, at, eps: float = 1e-5, keys: Iterable[str] | None = None) -> float:
    """Max relative error between tape adjoints and central differences.

    ``at`` is a dict of arrays (or a single array, in which case ``f`` gets a
    single argument). Relative error uses ``max(|analytic|, |numeric|, 1e-8)``
    as denominator.
    """
    if eps <= 0:
        raise UsageError("eps must be positive")
    single = not isinstance(at, Mapping)
    point = {"x": np.asarray(at, dtype=np.float64)} if single else {
        k: np.asarray(v, dtype=np.float64) for k, v in at.items()
    }
    call = (lambda p: f(p["x"])) if single else f
    _, analytic = grad(call, point)

    worst = 0.0
    for k in (point if keys is None else keys):
        base = point[k]
        flat = base.reshape(-1)
        for i in range(flat.size):
            bumped = dict(point)
            plus = flat.copy()
            plus[i] += eps
            bumped[k] = plus.reshape(base.shape)
            fp = float(call(bumped))
            minus = flat.copy()
            minus[i] -= eps
            bumped[k] = minus.reshape(base.shape)
            fm = float(call(bumped))
            numeric = (fp - fm) / (2 * eps)
            a = float(analytic[k].reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
