"""Hide-and-Enhance block.

During training each class activation map has its peak response scaled
down by ``beta``; the network then has to collect evidence from the rest of
the map. At evaluation the block is a pass-through.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, record
from .errors import ConfigError, ShapeError
from .ops import global_avgpool


class Mode(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class HEConfig:
    """``beta`` scales masked responses; ``apply_prob`` gates each (sample, channel)."""

    beta: float = 0.5
    apply_prob: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ConfigError(f"apply_prob must lie in [0, 1], got {self.apply_prob}")

    @property
    def is_identity(self):
        """True when training through the block cannot change anything."""
        return not self.enabled or self.beta == 1.0 or self.apply_prob == 0.0

    def canonical(self):
        """Collapse every no-op setting onto one config, so equivalent runs echo equal metadata."""
        return HEConfig(beta=1.0, apply_prob=1.0, enabled=False) if self.is_identity else self


def build_mask(F, apply_prob=1.0, rng=None):
    """Binary mask marking every position equal to its channel maximum.

    One uniform draw per (n, c) in n-major order decides whether that channel
    is masked at all; channels whose draw is ``>= apply_prob`` get an all-zero
    mask. Ties at the maximum are all masked.
    """
    data = F.data if isinstance(F, Tensor) else np.asarray(F)
    if data.ndim != 4:
        raise ShapeError(f"build_mask expects N×C×H×W, got {data.shape}", data.shape)
    n, c = data.shape[:2]
    peak = data.max(axis=(2, 3), keepdims=True)
    mask = data == peak
    if rng is None:
        rng = np.random.default_rng()
    gate = rng.random((n, c)) < apply_prob
    mask &= gate[:, :, None, None]
    return mask.astype(np.uint8)


def apply_mask(F, M, beta):
    """F where M == 0, beta * F where M == 1; the mask carries no gradient."""
    M = np.asarray(M)
    if M.shape != F.shape:
        raise ShapeError(
            f"mask shape {M.shape} does not match activation shape {F.shape}",
            M.shape,
            F.shape,
        )
    hit = M.astype(bool)
    b = F.data.dtype.type(beta)
    out = Tensor._wrap(np.where(hit, F.data * b, F.data))

    def backward(g):
        return (np.where(hit, g * b, g),)

    return record("apply_mask", (F,), out, backward)


def he_forward(F, cfg, mode, rng=None, mask=None):
    """Run the block. Eval mode or a disabled config returns ``F`` itself.

    ``mask`` overrides mask construction (used to freeze it for gradient checks).
    """
    if mode is Mode.EVAL or not cfg.enabled:
        return F
    if mask is None:
        mask = build_mask(F, cfg.apply_prob, rng)
    return apply_mask(F, mask, cfg.beta)


def score(F_prime):
    """Per-class confidence: spatial mean of each (suppressed) map."""
    return global_avgpool(F_prime)
