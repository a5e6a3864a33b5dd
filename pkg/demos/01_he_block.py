"""Walk through the Hide-and-Enhance block on hand-made activation maps."""
import numpy as np

from hesup import HEConfig, Mode, Tensor, apply_mask, build_mask, he_forward, ops, score

# one sample, one class channel, a 2x2 map with a single peak
F = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), requires_grad=True)
print("F\n", F.data[0, 0])

M = build_mask(F, apply_prob=1.0)
print("mask of the channel maximum\n", M[0, 0])

F_prime = apply_mask(F, M, beta=0.5)
print("peak scaled by beta=0.5\n", F_prime.data[0, 0])
print("class score (spatial mean):", score(F_prime).data[0, 0])

# the gradient reaching the peak is scaled by beta as well
loss = ops.sum(score(F_prime))
loss.backward()
print("d score / d F\n", F.grad[0, 0])

# ties: every position equal to the maximum is suppressed
T = np.array([[[[5.0, 1.0], [5.0, 5.0]]]])
print("tied map\n", T[0, 0], "\nmask\n", build_mask(T)[0, 0])

# apply_prob gates whole (sample, channel) pairs, one uniform draw each
rng = np.random.default_rng(0)
X = rng.standard_normal((1000, 4, 3, 3))
masked = build_mask(X, apply_prob=0.3, rng=rng).any(axis=(2, 3)).mean()
print(f"fraction of channels masked at apply_prob=0.3: {masked:.3f}")

# evaluation passes maps through untouched, whatever beta is
cfg = HEConfig(beta=0.2)
print("eval returns the input object:", he_forward(F, cfg, Mode.EVAL) is F)
print("beta=1 changes nothing in training:",
      np.array_equal(he_forward(F, HEConfig(beta=1.0), Mode.TRAIN).data, F.data))
