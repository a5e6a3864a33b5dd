"""Hide-and-Enhance font recognition on a small numpy CNN engine."""
from .autograd import Tape, Tensor, backward, no_grad, precision
from .errors import (
    BadMagicError,
    CheckpointError,
    ConfigError,
    DatasetError,
    HesupError,
    LabelError,
    ShapeError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)
from .gradcheck import gradcheck, gradcheck_suite
from .he_block import HEConfig, Mode, apply_mask, build_mask, he_forward, score
from .model import BackboneConfig, Model, build_model, predict
from .train import (
    Checkpoint,
    TrainConfig,
    evaluate,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    sgd_step,
    train_loop,
)

__version__ = "0.1.0"
