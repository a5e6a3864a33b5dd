"""Differentiable operations on :class:`~hesup.autograd.Tensor`.

No implicit broadcasting: binary elementwise ops require equal shapes, and
the only broadcast anywhere is a conv bias over channels.
"""
from __future__ import annotations

import numpy as np

from .autograd import Tensor, record
from .errors import LabelError, ShapeError


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(
            f"{op}: shapes {a.shape} and {b.shape} differ", a.shape, b.shape
        )


def add(a, b):
    _same_shape("add", a, b)
    out = Tensor._wrap(a.data + b.data)
    return record("add", (a, b), out, lambda g: (g, g))


def mul(a, b):
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    out = Tensor._wrap(ad * bd)
    return record("mul", (a, b), out, lambda g: (g * bd, g * ad))


def sum(x):  # noqa: A001 - mirrors numpy naming
    out = Tensor._wrap(x.data.sum())
    return record("sum", (x,), out, lambda g: (np.broadcast_to(g, x.shape),))


def mean(x):
    n = x.size
    out = Tensor._wrap(x.data.sum() / x.data.dtype.type(n))
    return record(
        "mean", (x,), out, lambda g: (np.broadcast_to(g / x.data.dtype.type(n), x.shape),)
    )


def relu(x):
    pos = x.data > 0
    out = Tensor._wrap(x.data * pos)
    # Subgradient at exactly zero is zero.
    return record("relu", (x,), out, lambda g: (g * pos,))


def conv2d(x, weight, bias=None, stride=1, pad=0):
    """2-D cross-correlation with zero padding.

    ``x`` is N×Cin×H×W, ``weight`` Cout×Cin×Kh×Kw, ``bias`` Cout or None.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(
            f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}",
            x.shape,
            weight.shape,
        )
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if cin != wcin:
        raise ShapeError(
            f"conv2d: input channels {cin} of input {x.shape} do not match "
            f"weight {weight.shape}",
            x.shape,
            weight.shape,
        )
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(
            f"conv2d: bias shape {bias.shape} does not match {cout} output channels",
            bias.shape,
            weight.shape,
        )
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: need stride >= 1 and pad >= 0, got {stride}, {pad}")
    hp, wp = h + 2 * pad, w + 2 * pad
    if kh > hp or kw > wp:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}",
            x.shape,
            weight.shape,
        )
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    # channel-major im2col: rows (cin, ki, kj), columns (n, i, j)
    xt = x.data.transpose(1, 0, 2, 3)
    if pad:
        xt = np.pad(xt, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((cin, kh, kw, n, ho, wo), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    cols = cols.reshape(cin * kh * kw, n * ho * wo)
    wmat = weight.data.reshape(cout, -1)
    out = (wmat @ cols).reshape(cout, n, ho, wo)
    if bias is not None:
        out += bias.data.reshape(cout, 1, 1, 1)
    out = Tensor._wrap(np.ascontiguousarray(out.transpose(1, 0, 2, 3)))

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(cout, -1)
        gw = gb = gx = None
        if weight.requires_grad:
            gw = (gt @ cols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = gt.sum(axis=1)
        if x.requires_grad:
            dcols = (wmat.T @ gt).reshape(cin, kh, kw, n, ho, wo)
            dxt = np.zeros((cin, n, h + 2 * pad, w + 2 * pad), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxt[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
            gx = dxt[:, :, pad : pad + h, pad : pad + w].transpose(1, 0, 2, 3)
        return (gx, gw) if bias is None else (gx, gw, gb)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", inputs, out, backward)


def maxpool2d(x, k, stride=None):
    """Window maxima; the first row-major argmax of each window takes the gradient."""
    stride = k if stride is None else stride
    if k <= 0 or stride <= 0:
        raise ValueError(f"maxpool2d: k and stride must be positive, got {k}, {stride}")
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects a 4-D input, got {x.shape}", x.shape)
    n, c, h, w = x.shape
    if k > h or k > w:
        raise ShapeError(f"maxpool2d: window {k} larger than input {h}x{w}", x.shape)
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    if stride == k and h == ho * k and w == wo * k:
        return _maxpool_tiled(x, k, ho, wo)
    xd = x.data

    def window(i, j):
        return xd[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]

    peak = window(0, 0).copy()
    for i in range(k):
        for j in range(k):
            np.maximum(peak, window(i, j), out=peak)
    # scan backwards so the first row-major argmax wins ties
    arg = np.empty(peak.shape, dtype=np.int32)
    for idx in reversed(range(k * k)):
        arg[window(idx // k, idx % k) == peak] = idx
    out = Tensor._wrap(peak)

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                hit = arg == i * k + j
                gx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += g * hit
        return (gx,)

    return record("maxpool2d", (x,), out, backward)


def _maxpool_tiled(x, k, ho, wo):
    # Non-overlapping windows that tile the input exactly: a reshape view.
    n, c = x.shape[:2]
    xr = np.ascontiguousarray(x.data).reshape(n, c, ho, k, wo, k)
    peak = xr[:, :, :, 0, :, 0].copy()
    for i in range(k):
        for j in range(k):
            np.maximum(peak, xr[:, :, :, i, :, j], out=peak)
    out = Tensor._wrap(peak)

    def backward(g):
        gx = np.zeros(xr.shape, dtype=g.dtype)
        left = np.ones(peak.shape, dtype=bool)  # windows still waiting for their argmax
        hit = np.empty(peak.shape, dtype=bool)
        for i in range(k):
            for j in range(k):
                np.equal(xr[:, :, :, i, :, j], peak, out=hit)
                hit &= left
                left ^= hit
                np.multiply(g, hit, out=gx[:, :, :, i, :, j])
        return (gx.reshape(x.shape),)

    return record("maxpool2d", (x,), out, backward)


def global_avgpool(x):
    """Spatial mean: N×C×H×W -> N×C."""
    if x.ndim != 4:
        raise ShapeError(f"global_avgpool expects a 4-D input, got {x.shape}", x.shape)
    hw = x.shape[2] * x.shape[3]
    scale = x.data.dtype.type(hw)
    out = Tensor._wrap(x.data.sum(axis=(2, 3)) / scale)

    def backward(g):
        return (np.broadcast_to((g / scale)[:, :, None, None], x.shape),)

    return record("global_avgpool", (x,), out, backward)


def _log_softmax(s):
    shifted = s - s.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(scores):
    """Row-wise softmax of an N×C tensor."""
    p = np.exp(_log_softmax(scores.data))
    out = Tensor._wrap(p)

    def backward(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return record("softmax", (scores,), out, backward)


def softmax_cross_entropy(scores, labels):
    """Mean negative log-likelihood of ``labels`` under softmax(scores)."""
    if scores.ndim != 2:
        raise ShapeError(f"expected N×C scores, got {scores.shape}", scores.shape)
    n, c = scores.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise ShapeError(
            f"{labels.shape[0]} labels for {n} score rows", labels.shape, scores.shape
        )
    for i, lab in enumerate(labels):
        if not 0 <= lab < c:
            raise LabelError(i, int(lab), c)
    logp = _log_softmax(scores.data)
    rows = np.arange(n)
    dt = scores.data.dtype.type
    out = Tensor._wrap(-logp[rows, labels].sum() / dt(n))

    def backward(g):
        d = np.exp(logp)
        d[rows, labels] -= 1
        return (d * (g / dt(n)),)

    return record("softmax_cross_entropy", (scores,), out, backward)
