"""Momentum SGD training, top-k evaluation and binary checkpoints."""
from __future__ import annotations

import json
import logging
import struct
from fractions import Fraction
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autograd import Tensor, no_grad
from .data import load_batch
from .errors import (
    BadMagicError,
    ConfigError,
    CorruptCheckpointError,
    DatasetError,
    ShapeError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)
from .he_block import HEConfig, Mode
from .model import BackboneConfig, Model, build_model, rank_classes
from .ops import softmax_cross_entropy

log = logging.getLogger(__name__)

MAGIC = b"HENC"
VERSION = 1
DTYPE_F32 = 0
HE_STREAM = 0x4845  # keeps HE draws independent of shuffling


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_factor: float = 0.8
    decay_every: int = 5
    epochs: int = 30
    batch_size: int = 64
    he: HEConfig = field(default_factory=HEConfig)
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.decay_factor <= 1:
            raise ConfigError(f"decay_factor must lie in (0, 1], got {self.decay_factor}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.decay_every < 1:
            raise ConfigError(f"decay_every must be >= 1, got {self.decay_every}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["he"] = HEConfig(**d.get("he", {}))
        return cls(**d)


def lr_schedule(epoch, cfg):
    """Step decay: lr0 * decay_factor ** (epoch // decay_every).

    The product is formed exactly from the decimal values of the config and
    rounded once, so epoch 12 of the default gives 0.00064 rather than
    0.0006400000000000002.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    exact = Fraction(repr(cfg.lr0)) * Fraction(repr(cfg.decay_factor)) ** (epoch // cfg.decay_every)
    return float(exact)


def decays(name):
    """Weight decay applies to convolution weights, never biases."""
    return name.endswith(".weight")


def sgd_step(params, grads, velocities, lr, momentum, weight_decay):
    """In-place momentum SGD over dicts keyed by parameter name.

    ``params`` values may be Tensors or arrays; velocities are arrays.
    """
    for name, p in params.items():
        data = p.data if isinstance(p, Tensor) else p
        g = grads[name]
        v = velocities[name]
        if g.shape != data.shape or v.shape != data.shape:
            raise ShapeError(
                f"sgd_step: {name} has param {data.shape}, grad {g.shape}, velocity {v.shape}",
                data.shape,
                g.shape,
                v.shape,
            )
        if weight_decay and decays(name):
            g = g + data.dtype.type(weight_decay) * data
        v *= v.dtype.type(momentum)
        v += g
        data -= data.dtype.type(lr) * v


@dataclass
class Checkpoint:
    params: dict  # name -> float32 array
    velocities: dict
    epoch: int
    meta: dict = field(default_factory=dict)

    @property
    def history(self):
        return self.meta.get("history", [])

    def model(self, he=None):
        cfg = BackboneConfig(**self.meta["model"])
        m = build_model(cfg, seed=0, he=he)
        for name, t in m.params.items():
            t.data[...] = self.params[name]
        return m


def evaluate(model, dataset, split="test", batch_size=64):
    """Top-1 and top-5 accuracy of eval-mode predictions."""
    idx = dataset.indices(split)
    if not idx:
        raise DatasetError(f"split {split!r} is empty")
    k = min(5, model.config.num_classes)
    hits1 = hits5 = 0
    with no_grad():
        for start in range(0, len(idx), batch_size):
            x, y = load_batch(dataset, idx[start : start + batch_size])
            s = model.forward(x, Mode.EVAL).data
            ranked = rank_classes(s)
            hits1 += int((ranked[:, 0] == y).sum())
            hits5 += int((ranked[:, :k] == y[:, None]).any(axis=1).sum())
    return hits1 / len(idx), hits5 / len(idx)


def train_loop(model, dataset, cfg, out_path=None, cache=True):
    """Train ``model`` in place; returns the final :class:`Checkpoint`.

    Per epoch the train indices are shuffled with a seed derived from
    (cfg.seed, epoch); the last partial batch is kept.
    """
    train_idx = np.asarray(dataset.indices("train"))
    if train_idx.size == 0:
        raise DatasetError("training split is empty")
    has_test = bool(dataset.split.get("test"))
    model.he = cfg.he
    images = labels = None
    if cache:
        images, labels = load_batch(dataset, list(range(len(dataset.samples))))
        images = images.data
    he_rng = np.random.default_rng([cfg.seed, HE_STREAM])
    velocities = {n: np.zeros_like(p.data) for n, p in model.params.items()}
    history = []
    steps = 0
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(train_idx)
        total = 0.0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            if cache:
                x, y = Tensor(images[batch]), labels[batch]
            else:
                x, y = load_batch(dataset, batch.tolist())
            for p in model.params.values():
                p.zero_grad()
            loss = softmax_cross_entropy(model.forward(x, Mode.TRAIN, he_rng), y)
            loss.backward()
            sgd_step(
                model.params,
                {n: p.grad for n, p in model.params.items()},
                velocities,
                lr,
                cfg.momentum,
                cfg.weight_decay,
            )
            total += float(loss.item()) * batch.size
            steps += 1
        row = {"epoch": epoch, "lr": lr, "train_loss": total / train_idx.size, "steps": steps}
        if has_test:
            row["test_top1"], row["test_top5"] = evaluate(model, dataset, "test")
        history.append(row)
        log.info("epoch %d %s", epoch, row)
    ckpt = Checkpoint(
        params={n: p.data.copy() for n, p in model.params.items()},
        velocities=velocities,
        epoch=cfg.epochs,
        meta={
            "epoch": cfg.epochs,
            "model": model.config.to_dict(),
            "train": replace(cfg, he=cfg.he.canonical()).to_dict(),
            "history": history,
        },
    )
    if out_path is not None:
        save_checkpoint(ckpt, out_path)
    return ckpt


# ---------------------------------------------------------------------------
# Checkpoint binary format, little-endian:
#   b"HENC" | u32 version | u32 tensor_count
#   per tensor: u16 name_len | name | u8 dtype | u8 ndim | ndim*u32 dims | f32 payload
#   u32 meta_len | JSON metadata

def _tensors(ckpt):
    for name in sorted(ckpt.params):
        yield f"param/{name}", ckpt.params[name]
    for name in sorted(ckpt.velocities):
        yield f"velocity/{name}", ckpt.velocities[name]


def dump_checkpoint(ckpt):
    meta = dict(ckpt.meta)
    meta["epoch"] = ckpt.epoch
    tensors = list(_tensors(ckpt))
    out = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out.append(struct.pack("<I", len(blob)) + blob)
    return b"".join(out)


def save_checkpoint(ckpt, path):
    Path(path).write_bytes(dump_checkpoint(ckpt))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncatedCheckpointError(
                f"truncated checkpoint: needed {n} bytes for {what} at offset {self.pos}, "
                f"only {len(self.buf) - self.pos} left"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse_checkpoint(buf):
    r = _Reader(buf)
    magic = r.take(4, "magic") if len(buf) >= 4 else buf
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {bytes(magic)!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version}, expected {VERSION}")
    (count,) = r.unpack("<I", "tensor count")
    params, velocities = {}, {}
    for _ in range(count):
        (nlen,) = r.unpack("<H", "name length")
        name = r.take(nlen, "tensor name").decode("utf-8")
        dtype, ndim = r.unpack("<BB", f"header of {name}")
        if dtype != DTYPE_F32:
            raise CorruptCheckpointError(f"tensor {name}: unknown dtype code {dtype}")
        dims = r.unpack(f"<{ndim}I", f"dims of {name}")
        count_el = int(np.prod(dims, dtype=np.int64))
        payload = r.take(4 * count_el, f"payload of {name}")
        arr = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
        kind, _, key = name.partition("/")
        if kind == "param":
            params[key] = arr
        elif kind == "velocity":
            velocities[key] = arr
        else:
            raise CorruptCheckpointError(f"unexpected tensor name {name!r}")
    (mlen,) = r.unpack("<I", "metadata length")
    meta = json.loads(r.take(mlen, "metadata").decode("utf-8"))
    if r.pos != len(buf):
        raise CorruptCheckpointError(f"{len(buf) - r.pos} trailing bytes after metadata")
    return Checkpoint(params, velocities, int(meta.get("epoch", 0)), meta)


def load_checkpoint(path):
    return parse_checkpoint(Path(path).read_bytes())
