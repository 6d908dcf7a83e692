"""Reverse-mode gradients and differentiating through an update
================================================================

The tensor engine records every op; `grads` walks the tape backwards.
Because the backward rules are themselves tensor ops, a gradient step
can be recorded and differentiated again, which is exactly what the
bi-level optimizer needs.
"""

import numpy as np

from fuzzymeta.autodiff import (
    ParamSet,
    Tensor,
    backward,
    finite_diff_check,
    grad_through_update,
    grads,
    log_softmax,
)

# --- 1. plain reverse mode ----------------------------------------------
rng = np.random.default_rng(0)
w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
x = Tensor(rng.normal(size=(5, 4)))
labels = np.eye(3)[rng.integers(0, 3, 5)]

loss = -(Tensor(labels) * log_softmax(x @ w, axis=1)).sum(axis=1).mean()
(gw,) = grads(loss, [w])
print("loss:", float(loss.data))
print("gradient shape:", gw.shape, " norm:", float(np.linalg.norm(gw.data)))

# Central finite differences agree to ~1e-5 relative error:
params = ParamSet({"w": w})


def loss_fn(p):
    return -(Tensor(labels) * log_softmax(x @ p["w"], axis=1)).sum(axis=1).mean()


print("finite-difference max relative error:", finite_diff_check(loss_fn, params, 1e-3))

# --- 2. second-order: the scalar oracle ----------------------------------
# Inner loss L(t) = t^2, one step t' = t - a * 2t = t (1 - 2a).
# Outer loss (t')^2 has d/dt = 2 t (1 - 2a)^2; detaching the inner
# gradient (first-order mode) loses one factor of (1 - 2a).
theta = Tensor(1.0, requires_grad=True)
ps = ParamSet({"theta": theta})
alpha = 0.1

inner = backward(ps["theta"] * ps["theta"], ps, create_graph=True)
adapted = grad_through_update(ps, inner, alpha)
meta = backward(adapted["theta"] * adapted["theta"], ps)
print("\nsecond-order meta-gradient:", meta["theta"].item(), " (closed form 1.28)")

inner = backward(ps["theta"] * ps["theta"], ps, create_graph=True)
adapted = grad_through_update(ps, inner, alpha, first_order=True)
meta = backward(adapted["theta"] * adapted["theta"], ps)
print("first-order meta-gradient:  ", meta["theta"].item(), " (closed form 1.60)")

# --- 3. the same, through a real network --------------------------------
# One recorded step on a mini-batch, then the query loss differentiated
# back to the ORIGINAL weights: this is one MAML-style inner/outer pair.
w2 = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
ps2 = ParamSet({"w": w2})
support = loss_fn(ps2)
adapted = grad_through_update(ps2, backward(support, ps2, create_graph=True), 0.05)
x_query = Tensor(rng.normal(size=(5, 4)))
query = -(Tensor(labels) * log_softmax(x_query @ adapted["w"], axis=1)).sum(axis=1).mean()
meta = backward(query, ps2)
print("\nquery loss after one adaptation step:", float(query.data))
print("meta-gradient norm through the step:  ", float(np.linalg.norm(meta["w"].data)))
