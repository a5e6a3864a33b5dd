"""The numpy autodiff engine: record ops, run backward, check against finite differences."""
import numpy as np

from hesup import Tape, Tensor, gradcheck, gradcheck_suite, ops, precision

rng = np.random.default_rng(0)
x = Tensor(rng.standard_normal((2, 1, 6, 6)), requires_grad=True)
w = Tensor(rng.standard_normal((3, 1, 3, 3)) * 0.5, requires_grad=True)
b = Tensor(np.zeros(3), requires_grad=True)

# a tape keeps every op in execution order
with Tape() as tape:
    h = ops.relu(ops.conv2d(x, w, b, pad=1))
    s = ops.global_avgpool(ops.maxpool2d(h, 2))
    loss = ops.softmax_cross_entropy(s, [0, 2])
print("recorded ops:", [r.op for r in tape.records])
print("loss:", loss.item())

tape.backward(loss)
print("weight grad shape:", w.grad.shape, " bias grad:", b.grad)

# finite differences run in float64; step is 1e-4 * max(1, |x|)
with precision(np.float64):
    err = gradcheck(lambda t: ops.mean(ops.mul(ops.relu(t), t)), rng.standard_normal((4, 5)))
print(f"relu*x gradcheck max relative error: {err:.2e}")

# the full suite: every differentiable op plus a tiny model with a frozen mask
for name, e in gradcheck_suite().items():
    print(f"  {name:<26} {e:.1e}")
