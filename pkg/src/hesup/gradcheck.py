"""Central-difference gradient oracle."""
from __future__ import annotations

import numpy as np

from .autograd import Tensor, backward, no_grad, precision


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(1e-6, np.abs(a) + np.abs(n))


def numerical_grad(f, x, h=1e-4):
    """Central differences of scalar ``f`` at ``x`` (float64 array).

    The step for element i is ``h * max(1, |x_i|)``.
    """
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = out.reshape(-1)
    with precision(np.float64), no_grad():
        for i in range(flat.size):
            orig = flat[i]
            step = h * max(1.0, abs(orig))
            flat[i] = orig + step
            fp = float(f(Tensor(x)).item())
            flat[i] = orig - step
            fm = float(f(Tensor(x)).item())
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * step)
    return out


def analytic_grad(f, x):
    with precision(np.float64):
        xt = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
        loss = f(xt)
        backward(loss)
        return xt.grad.copy()


def gradcheck(f, x, h=1e-4):
    """Max relative error between backprop and central differences.

    ``f`` maps a Tensor to a scalar Tensor. Both routes evaluate in float64.
    """
    if isinstance(x, Tensor):
        x = x.data
    a = analytic_grad(f, x)
    n = numerical_grad(f, x, h)
    return float(relative_error(a, n).max())


def _model_cases(rng):
    from . import ops
    from .he_block import HEConfig, Mode, build_mask
    from .model import BackboneConfig, build_model

    model = build_model(BackboneConfig((4,), num_classes=3, input_size=8), seed=0, he=HEConfig(beta=0.5))
    model = model.astype(np.float64)
    x = rng.uniform(-1, 1, (2, 1, 8, 8))
    labels = [0, 2]
    mask = build_mask(model.activation_maps(Tensor(x, dtype=np.float64)), 1.0, rng)

    def loss(inp):
        return ops.softmax_cross_entropy(model.forward(inp, Mode.TRAIN, mask=mask), labels)

    yield "model/input", loss, x
    xt = Tensor(x, dtype=np.float64)
    for name in sorted(model.params):
        def wrt(t, name=name):
            saved = model.params[name]
            model.params[name] = t
            try:
                return ops.softmax_cross_entropy(model.forward(xt, Mode.TRAIN, mask=mask), labels)
            finally:
                model.params[name] = saved

        yield f"model/{name}", wrt, model.params[name].data


def suite_cases(seed=0):
    """(name, f, x) triples covering every differentiable op and a tiny model."""
    from . import ops
    from .he_block import apply_mask, build_mask, score

    rng = np.random.default_rng(seed)

    def u(*shape):
        return rng.uniform(-1, 1, shape)

    x4, w, b = u(2, 3, 5, 5), u(4, 3, 3, 3), u(4)
    other = u(2, 3, 5, 5)
    proj = u(2, 4)
    feat = u(2, 3, 4, 4)
    mask = build_mask(Tensor(feat), 1.0, rng)

    def weighted(t):
        # a non-uniform scalar reduction so every output element matters differently
        return ops.sum(ops.mul(t, Tensor(np.linspace(0.5, 1.5, t.size).reshape(t.shape))))

    cases = [
        ("add", lambda t: weighted(ops.add(t, Tensor(other))), x4),
        ("mul", lambda t: weighted(ops.mul(t, Tensor(other))), x4),
        ("sum", lambda t: ops.sum(ops.mul(t, t)), x4),
        ("mean", lambda t: ops.mean(ops.mul(t, t)), x4),
        ("relu", lambda t: weighted(ops.relu(t)), x4),
        ("conv2d/input", lambda t: weighted(ops.conv2d(t, Tensor(w), Tensor(b), stride=2, pad=1)), x4),
        ("conv2d/weight", lambda t: weighted(ops.conv2d(Tensor(x4), t, Tensor(b), pad=1)), w),
        ("conv2d/bias", lambda t: weighted(ops.conv2d(Tensor(x4), Tensor(w), t)), b),
        ("maxpool2d/tiled", lambda t: weighted(ops.maxpool2d(t, 2)), u(2, 3, 4, 4)),
        ("maxpool2d/overlap", lambda t: weighted(ops.maxpool2d(t, 3, 2)), x4),
        ("global_avgpool", lambda t: weighted(ops.global_avgpool(t)), x4),
        ("softmax", lambda t: weighted(ops.softmax(t)), proj),
        ("softmax_cross_entropy", lambda t: ops.softmax_cross_entropy(t, [1, 3]), proj),
        ("apply_mask", lambda t: weighted(apply_mask(t, mask, 0.5)), feat),
        ("score", lambda t: weighted(score(t)), feat),
    ]
    yield from cases
    yield from _model_cases(rng)


def gradcheck_suite(seed=0, h=1e-4):
    """Run every case; returns {name: max relative error} in run order."""
    return {name: gradcheck(f, x, h) for name, f, x in suite_cases(seed)}
