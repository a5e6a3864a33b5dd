"""Small convolutional backbone with a 1×1-conv class head.

The head keeps spatial resolution, giving one activation map per class;
scores are the spatial means of those maps after the HE block.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .autograd import Tensor, no_grad
from .errors import ConfigError, ShapeError
from .he_block import HEConfig, Mode, he_forward, score


@dataclass(frozen=True)
class BackboneConfig:
    stage_channels: tuple = (16, 32)
    num_classes: int = 20
    residual: bool = False
    input_channels: int = 1
    input_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        if not self.stage_channels or min(self.stage_channels) < 1:
            raise ConfigError(f"stage_channels must be non-empty positive widths, got {self.stage_channels}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_channels != 1:
            raise ConfigError("only grayscale (1 input channel) is supported")
        if self.input_size < self.min_input_size:
            raise ConfigError(
                f"input size {self.input_size} is too small for {len(self.stage_channels)} "
                f"stages; minimum input size is {self.min_input_size}"
            )

    @property
    def min_input_size(self):
        return 2 ** len(self.stage_channels)

    @property
    def map_size(self):
        size = self.input_size
        for _ in self.stage_channels:
            size //= 2
        return size

    def to_dict(self):
        d = asdict(self)
        d["stage_channels"] = list(self.stage_channels)
        return d


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


@dataclass
class Model:
    """Named parameters plus the architecture that consumes them."""

    config: BackboneConfig
    params: dict
    he: HEConfig = field(default_factory=HEConfig)

    def parameters(self):
        return list(self.params.items())

    def astype(self, dtype):
        """Copy with parameters cast to ``dtype`` (gradient checks use float64)."""
        return Model(
            self.config,
            {k: Tensor(v.data, requires_grad=v.requires_grad, dtype=dtype) for k, v in self.params.items()},
            self.he,
        )

    def activation_maps(self, x):
        """Backbone plus 1×1 head: N×1×H×W -> N×C×H'×W'."""
        cfg = self.config
        expected = (cfg.input_channels, cfg.input_size, cfg.input_size)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(
                f"model expects input N×{expected[0]}×{expected[1]}×{expected[2]}, got {x.shape}",
                x.shape,
            )
        p = self.params
        h = x
        for s in range(len(cfg.stage_channels)):
            y = ops.relu(ops.conv2d(h, p[f"stage{s}.conv.weight"], p[f"stage{s}.conv.bias"], pad=1))
            if cfg.residual:
                skip = h
                if f"stage{s}.proj.weight" in p:
                    skip = ops.conv2d(h, p[f"stage{s}.proj.weight"], p[f"stage{s}.proj.bias"])
                y = ops.add(y, skip)
            h = ops.maxpool2d(y, 2, 2)
        return ops.conv2d(h, p["head.weight"], p["head.bias"])

    def forward(self, x, mode=Mode.EVAL, rng=None, mask=None):
        """Class scores N×C; the HE block is active only in ``Mode.TRAIN``."""
        F = self.activation_maps(x)
        return score(he_forward(F, self.he, mode, rng, mask))

    __call__ = forward


def build_model(cfg, seed=0, he=None):
    """Initialise weights uniform in ±sqrt(6/fan_in) and biases at zero."""
    rng = np.random.default_rng(seed)
    params = {}
    cin = cfg.input_channels
    for s, cout in enumerate(cfg.stage_channels):
        params[f"stage{s}.conv.weight"] = _uniform(rng, (cout, cin, 3, 3), cin * 9)
        params[f"stage{s}.conv.bias"] = np.zeros(cout, np.float32)
        if cfg.residual and cin != cout:
            params[f"stage{s}.proj.weight"] = _uniform(rng, (cout, cin, 1, 1), cin)
            params[f"stage{s}.proj.bias"] = np.zeros(cout, np.float32)
        cin = cout
    params["head.weight"] = _uniform(rng, (cfg.num_classes, cin, 1, 1), cin)
    params["head.bias"] = np.zeros(cfg.num_classes, np.float32)
    tensors = {k: Tensor(v, requires_grad=True, dtype=np.float32, name=k) for k, v in params.items()}
    return Model(cfg, tensors, he if he is not None else HEConfig())


def rank_classes(scores):
    """Indices by descending score; ties go to the lower class index."""
    scores = np.asarray(scores)
    return np.argsort(-scores, axis=-1, kind="stable")


def predict(model, image, k=5):
    """Top-``k`` classes and the full score vector for one image or a batch.

    ``image`` may be H×W, 1×H×W or N×1×H×W.
    """
    x = np.asarray(image.data if isinstance(image, Tensor) else image)
    single = x.ndim < 4
    x = x.reshape((-1, 1) + x.shape[-2:])
    with no_grad():
        s = model.forward(Tensor(x, dtype=model.params["head.weight"].dtype), Mode.EVAL).data
    top = rank_classes(s)[:, :k]
    if single:
        return top[0], s[0]
    return top, s
