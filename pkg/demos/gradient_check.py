"""Verify the scorer's backward pass against central finite differences.

The composed objective is LCE over a group of scored documents; every
parameter coordinate of the tanh scorer is checked.
"""

import numpy as np

from rankforge.losses import lce
from rankforge.scorer import N_DENSE, ScorerParams, backward_batch, score_batch

rng = np.random.default_rng(7)
BUCKETS, HIDDEN, GROUP = 8, 4, 6
F = BUCKETS + N_DENSE

params = ScorerParams(
    w1=rng.normal(size=(HIDDEN, F)),
    b1=rng.normal(size=HIDDEN),
    w2=rng.normal(size=HIDDEN),
    b2=float(rng.normal()),
)
x_mat = rng.normal(size=(GROUP, F))


def objective() -> float:
    scores, _ = score_batch(params, x_mat)
    return lce(scores).value


scores, activations = score_batch(params, x_mat)
loss = lce(scores)
grads = backward_batch(params, x_mat, activations, loss.grad)
print(f"group of {GROUP} docs, loss = {loss.value:.6f}")

step = 1e-4
worst = 0.0
checked = 0
for arr, garr in ((params.w1, grads.w1), (params.b1, grads.b1), (params.w2, grads.w2)):
    flat, gflat = arr.ravel(), garr.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = objective()
        flat[i] = orig - step
        lo = objective()
        flat[i] = orig
        fd = (hi - lo) / (2 * step)
        worst = max(worst, abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-6))
        checked += 1

orig = params.b2
params.b2 = orig + step
hi = objective()
params.b2 = orig - step
lo = objective()
params.b2 = orig
fd = (hi - lo) / (2 * step)
worst = max(worst, abs(grads.b2 - fd) / max(abs(grads.b2), abs(fd), 1e-6))
checked += 1

print(f"checked {checked} parameter coordinates")
print(f"worst relative error vs central differences: {worst:.3e}")
assert worst < 1e-5, "gradient check failed"
print("analytic backward agrees with finite differences")
