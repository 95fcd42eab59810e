"""Reverse-mode differentiation on a tape, checked against finite differences.

Every op in ``groundcot.numerics`` accepts plain arrays (nothing is recorded)
or tape variables (the op is recorded with its adjoint). ``grad`` wraps a
function of a parameter dict; ``check_gradient`` compares the result with
central differences coordinate by coordinate.
"""

import numpy as np

from groundcot import numerics as nx

rng = np.random.default_rng(0)

# A tiny attention block: project, normalise, attend, pool.
params = {
    "w": rng.standard_normal((4, 4)) / 2,
    "g": np.ones((1, 4)),
    "b": np.zeros((1, 4)),
}
x = rng.standard_normal((5, 4))
targets = [0, 2, 1, 3, 0]


def loss(p):
    h = nx.layer_norm(nx.matmul(x, p["w"]), p["g"], p["b"])
    a = nx.softmax_rows(nx.matmul(h, nx.transpose(h)))
    return nx.cross_entropy(nx.gelu(nx.matmul(a, h)), targets)


value, grads = nx.grad(loss, params)
print(f"loss = {float(value):.6f}")
for name, g in grads.items():
    print(f"  d loss / d {name}: shape {g.shape}, norm {np.linalg.norm(g):.4f}")

err = nx.check_gradient(loss, params, eps=1e-5)
print(f"max relative error vs central differences: {err:.2e}")

# The tape can also be driven by hand; backward replays ops in reverse.
tape = nx.Tape()
v = tape.variable(np.eye(2))
out = nx.total(nx.softmax_rows(nx.matmul(v, v)) * 3.0)
(dv,) = tape.gradient(out, [v])
print("recorded ops:", tape.op_names, "replayed in order", tape.backward_order)
