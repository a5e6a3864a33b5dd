import struct
from dataclasses import replace

import mpmath
import numpy as np
import pytest

from hesup.data import generate_dataset, split_dataset
from hesup.errors import (
    BadMagicError,
    ConfigError,
    DatasetError,
    ShapeError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)
from hesup.he_block import HEConfig
from hesup.model import BackboneConfig, build_model
from hesup.train import (
    Checkpoint,
    TrainConfig,
    dump_checkpoint,
    evaluate,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    sgd_step,
    train_loop,
)

GLYPHS = ["0", "1", "2", "A", "B", "C", "H", "O"]


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    m = generate_dataset(3, GLYPHS, size=16, seed=1, out_dir=out)
    m = split_dataset(m, 2, seed=0)
    m.save(out)
    return m


def tiny_model(seed=0, he=None, classes=3):
    return build_model(BackboneConfig((4, 6), num_classes=classes, input_size=16), seed=seed, he=he)


# -- schedule -------------------------------------------------------------------

def test_lr_schedule_examples():
    cfg = TrainConfig()
    assert lr_schedule(0, cfg) == 0.001
    assert lr_schedule(4, cfg) == 0.001
    assert lr_schedule(5, cfg) == 0.0008
    assert lr_schedule(12, cfg) == 0.00064


def high_precision_lr(lr0, factor, every, epoch):
    with mpmath.workdps(60):
        return float(mpmath.mpf(lr0) * mpmath.mpf(factor) ** (epoch // every))


@pytest.mark.parametrize("lr0,factor,every", [("0.001", "0.8", 5), ("0.05", "0.7", 3), ("0.1", "0.9", 1)])
def test_lr_schedule_closed_form_0_to_100(lr0, factor, every):
    cfg = TrainConfig(lr0=float(lr0), decay_factor=float(factor), decay_every=every)
    for e in range(101):
        assert lr_schedule(e, cfg) == high_precision_lr(lr0, factor, every, e), e
        assert lr_schedule(e, cfg) == pytest.approx(cfg.lr0 * cfg.decay_factor ** (e // every), rel=1e-13)


def test_lr_schedule_negative_epoch():
    with pytest.raises(ValueError):
        lr_schedule(-1, TrainConfig())


@pytest.mark.parametrize("kw", [{"lr0": 0}, {"decay_factor": 0}, {"decay_factor": 1.5}, {"batch_size": 0}])
def test_train_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


# -- sgd ------------------------------------------------------------------------

def test_sgd_plain_step():
    p = {"w.weight": np.array([1.0], np.float32)}
    v = {"w.weight": np.zeros(1, np.float32)}
    sgd_step(p, {"w.weight": np.array([0.5], np.float32)}, v, 0.1, 0.0, 0.0)
    assert p["w.weight"][0] == np.float32(1.0) - np.float32(0.1) * np.float32(0.5)
    assert p["w.weight"][0] == pytest.approx(0.95)


def test_sgd_zero_grad_no_change():
    rng = np.random.default_rng(0)
    p = {"a.weight": rng.standard_normal(4).astype(np.float32), "a.bias": rng.standard_normal(2).astype(np.float32)}
    before = {k: v.copy() for k, v in p.items()}
    v = {k: np.zeros_like(x) for k, x in p.items()}
    sgd_step(p, {k: np.zeros_like(x) for k, x in p.items()}, v, 0.1, 0.9, 0.0)
    for k in p:
        np.testing.assert_array_equal(p[k], before[k])


def test_sgd_momentum_two_steps():
    lr, g, mu = 0.1, 0.25, 0.9
    p = {"x.bias": np.array([2.0])}
    v = {"x.bias": np.zeros(1)}
    for _ in range(2):
        sgd_step(p, {"x.bias": np.array([g])}, v, lr, mu, 0.0)
    # v1 = g, v2 = mu*g + g -> displacement lr*g*(1 + 1.9)
    assert 2.0 - p["x.bias"][0] == pytest.approx(lr * g * (1 + (1 + mu)), rel=1e-12)


def test_sgd_vanilla_exact():
    rng = np.random.default_rng(1)
    w = rng.standard_normal((3, 3)).astype(np.float32)
    g = rng.standard_normal((3, 3)).astype(np.float32)
    p = {"k.weight": w.copy()}
    sgd_step(p, {"k.weight": g}, {"k.weight": np.zeros_like(w)}, 0.01, 0.0, 0.0)
    np.testing.assert_array_equal(p["k.weight"], w - np.float32(0.01) * g)


def test_sgd_weight_decay_skips_bias():
    p = {"c.weight": np.array([1.0]), "c.bias": np.array([1.0])}
    v = {k: np.zeros(1) for k in p}
    sgd_step(p, {k: np.zeros(1) for k in p}, v, 1.0, 0.0, 0.1)
    assert p["c.weight"][0] == pytest.approx(0.9)
    assert p["c.bias"][0] == 1.0


def test_sgd_shape_mismatch():
    with pytest.raises(ShapeError):
        sgd_step({"a.weight": np.zeros(3)}, {"a.weight": np.zeros(2)}, {"a.weight": np.zeros(3)}, 0.1, 0.9, 0.0)


# -- training loop --------------------------------------------------------------

def test_step_count_per_epoch(tiny):
    # 8 training samples with batch 4 -> exactly 2 steps
    m = replace(tiny, split={**tiny.split, "train": tiny.split["train"][:8]})
    ckpt = train_loop(tiny_model(), m, TrainConfig(epochs=1, batch_size=4))
    assert ckpt.history[0]["steps"] == 2
    m5 = replace(tiny, split={**tiny.split, "train": tiny.split["train"][:9]})
    assert train_loop(tiny_model(), m5, TrainConfig(epochs=1, batch_size=4)).history[0]["steps"] == 3


def test_empty_train_split(tiny):
    m = replace(tiny, split={**tiny.split, "train": []})
    with pytest.raises(DatasetError):
        train_loop(tiny_model(), m, TrainConfig(epochs=1))


def test_beta_one_equals_disabled(tiny):
    cfg = TrainConfig(lr0=0.05, epochs=3, batch_size=4, seed=7)
    a = train_loop(tiny_model(), tiny, replace(cfg, he=HEConfig(beta=1.0)))
    b = train_loop(tiny_model(), tiny, replace(cfg, he=HEConfig(enabled=False)))
    assert a.history == b.history
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()
        assert a.velocities[k].tobytes() == b.velocities[k].tobytes()


def test_beta_half_changes_training(tiny):
    cfg = TrainConfig(lr0=0.05, epochs=2, batch_size=4, seed=7)
    a = train_loop(tiny_model(), tiny, replace(cfg, he=HEConfig(beta=1.0)))
    b = train_loop(tiny_model(), tiny, replace(cfg, he=HEConfig(beta=0.5)))
    assert a.history != b.history


def test_training_deterministic(tiny, tmp_path):
    cfg = TrainConfig(lr0=0.05, epochs=2, batch_size=4, seed=3, he=HEConfig(beta=0.5, apply_prob=0.7))
    train_loop(tiny_model(), tiny, cfg, out_path=tmp_path / "a.ckpt")
    train_loop(tiny_model(), tiny, cfg, out_path=tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_training_reduces_loss(tiny):
    ckpt = train_loop(tiny_model(), tiny, TrainConfig(lr0=0.1, epochs=8, batch_size=4, seed=0))
    assert ckpt.history[-1]["train_loss"] < ckpt.history[0]["train_loss"]
    assert 0 <= ckpt.history[-1]["test_top1"] <= ckpt.history[-1]["test_top5"] <= 1


# -- evaluation -----------------------------------------------------------------

def test_evaluate_constant_class_zero(tiny):
    model = tiny_model()
    model.params["head.weight"].data[...] = 0
    model.params["head.bias"].data[...] = [5.0, 1.0, 0.0]
    only0 = [i for i in tiny.split["test"] if tiny.samples[i].font_id == 0]
    m = replace(tiny, split={**tiny.split, "test": only0})
    assert evaluate(model, m, "test") == (1.0, 1.0)


def test_evaluate_topk_equals_classes_is_one(tiny):
    # 3 classes: top-5 clips to 3, always a hit
    assert evaluate(tiny_model(seed=4), tiny, "test")[1] == 1.0


def test_evaluate_independent_of_he(tiny):
    results = set()
    for he in (HEConfig(beta=1.0), HEConfig(beta=0.3), HEConfig(beta=0.5, apply_prob=0.2), HEConfig(enabled=False)):
        results.add(evaluate(tiny_model(seed=2, he=he), tiny, "test"))
    assert len(results) == 1


def test_evaluate_empty_split(tiny):
    with pytest.raises(DatasetError):
        evaluate(tiny_model(), replace(tiny, split={**tiny.split, "test": []}), "test")


# -- checkpoints ----------------------------------------------------------------

@pytest.fixture(scope="module")
def ckpt(tiny):
    return train_loop(tiny_model(), tiny, TrainConfig(lr0=0.05, epochs=1, batch_size=4))


def test_checkpoint_round_trip(ckpt, tmp_path):
    save_checkpoint(ckpt, tmp_path / "c")
    loaded = load_checkpoint(tmp_path / "c")
    assert loaded.epoch == 1
    for k in ckpt.params:
        assert loaded.params[k].tobytes() == ckpt.params[k].tobytes()
        assert loaded.velocities[k].tobytes() == ckpt.velocities[k].tobytes()
    assert loaded.history == ckpt.history
    save_checkpoint(loaded, tmp_path / "d")
    assert (tmp_path / "c").read_bytes() == (tmp_path / "d").read_bytes()


def test_checkpoint_layout(ckpt):
    raw = dump_checkpoint(ckpt)
    assert raw[:4] == b"HENC"
    version, count = struct.unpack_from("<II", raw, 4)
    assert version == 1 and count == 2 * len(ckpt.params)
    (nlen,) = struct.unpack_from("<H", raw, 12)
    name = raw[14 : 14 + nlen].decode()
    dtype, ndim = raw[14 + nlen], raw[15 + nlen]
    dims = struct.unpack_from(f"<{ndim}I", raw, 16 + nlen)
    assert dtype == 0
    key = name.split("/", 1)[1]
    assert dims == ckpt.params[key].shape


def test_checkpoint_rebuilds_model(ckpt, tiny):
    model = Checkpoint.model(ckpt)
    assert model.config == BackboneConfig((4, 6), num_classes=3, input_size=16)
    for k, t in model.params.items():
        assert t.data.tobytes() == ckpt.params[k].tobytes()


def test_checkpoint_bad_magic(ckpt, tmp_path):
    raw = bytearray(dump_checkpoint(ckpt))
    raw[:4] = b"XXXX"
    (tmp_path / "bad").write_bytes(raw)
    with pytest.raises(BadMagicError, match="bad magic"):
        load_checkpoint(tmp_path / "bad")


def test_checkpoint_bad_version(ckpt, tmp_path):
    raw = bytearray(dump_checkpoint(ckpt))
    raw[4:8] = struct.pack("<I", 9)
    (tmp_path / "v").write_bytes(raw)
    with pytest.raises(UnsupportedVersionError):
        load_checkpoint(tmp_path / "v")


@pytest.mark.parametrize("cut", [2, 10, 100, -5])
def test_checkpoint_truncated(ckpt, tmp_path, cut):
    raw = dump_checkpoint(ckpt)
    (tmp_path / "t").write_bytes(raw[:cut])
    with pytest.raises((TruncatedCheckpointError, BadMagicError)) as info:
        load_checkpoint(tmp_path / "t")
    if cut >= 4:
        assert isinstance(info.value, TruncatedCheckpointError)
