import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hesup import ops
from hesup.autograd import Tensor
from hesup.errors import ConfigError, ShapeError
from hesup.gradcheck import gradcheck
from hesup.he_block import HEConfig, Mode, apply_mask, build_mask, he_forward, score

F22 = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])


def brute_force_mask(F):
    n, c, h, w = F.shape
    M = np.zeros(F.shape, dtype=np.uint8)
    for a in range(n):
        for ch in range(c):
            best = max(F[a, ch, i, j] for i in range(h) for j in range(w))
            for i in range(h):
                for j in range(w):
                    if F[a, ch, i, j] == best:
                        M[a, ch, i, j] = 1
    return M


def test_mask_unique_max():
    M = build_mask(Tensor(F22), 1.0, np.random.default_rng(0))
    np.testing.assert_array_equal(M[0, 0], [[0, 0], [0, 1]])


def test_mask_all_ties():
    M = build_mask(Tensor([[[[5.0, 5.0], [1.0, 5.0]]]]), 1.0, np.random.default_rng(0))
    np.testing.assert_array_equal(M[0, 0], [[1, 1], [0, 1]])


def test_mask_prob_zero():
    F = np.random.default_rng(1).standard_normal((3, 4, 5, 5))
    assert not build_mask(Tensor(F), 0.0, np.random.default_rng(0)).any()


def test_mask_consumes_one_draw_per_channel():
    F = np.random.default_rng(2).standard_normal((3, 4, 2, 2))
    rng = np.random.default_rng(5)
    M = build_mask(Tensor(F), 0.5, rng)
    ref = np.random.default_rng(5)
    u = ref.random((3, 4))
    assert rng.random() == ref.random()
    masked = M.reshape(3, 4, -1).any(axis=2)
    np.testing.assert_array_equal(masked, u < 0.5)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 3).flatmap(
        lambda n: st.tuples(st.just(n), st.integers(1, 4), st.integers(1, 5), st.integers(1, 5))
    ).flatmap(lambda shape: arrays(np.float32, shape, elements=st.sampled_from([-1.0, 0.0, 0.5, 2.0, 3.0])))
)
def test_mask_matches_brute_force_with_ties(F):
    np.testing.assert_array_equal(build_mask(Tensor(F), 1.0, np.random.default_rng(0)), brute_force_mask(F))


def test_mask_masked_fraction_statistic():
    # distinct values -> unique maxima; 10,000 channel draws
    F = np.random.default_rng(3).standard_normal((100, 100, 3, 3))
    for p in (0.1, 0.5, 0.9):
        M = build_mask(Tensor(F), p, np.random.default_rng(int(p * 10)))
        frac = M.reshape(100, 100, -1).any(axis=2).mean()
        assert abs(frac - p) <= 0.02


def test_apply_mask_worked_example():
    M = np.array([[[[0, 0], [0, 1]]]], dtype=np.uint8)
    out = apply_mask(Tensor(F22), M, 0.5)
    np.testing.assert_array_equal(out.data[0, 0], [[1, 2], [3, 2]])


def test_apply_mask_beta_zero():
    M = np.array([[[[0, 0], [0, 1]]]], dtype=np.uint8)
    np.testing.assert_array_equal(apply_mask(Tensor(F22), M, 0.0).data[0, 0], [[1, 2], [3, 0]])


def test_apply_mask_shape_mismatch():
    with pytest.raises(ShapeError):
        apply_mask(Tensor(F22), np.zeros((1, 1, 2, 3)), 0.5)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float32, (2, 3, 4, 4), elements=st.floats(-1e6, 1e6, width=32)),
       arrays(np.uint8, (2, 3, 4, 4), elements=st.integers(0, 1)))
def test_apply_mask_beta_one_is_bitwise_identity(F, M):
    assert apply_mask(Tensor(F), M, 1.0).data.tobytes() == F.tobytes()


def test_apply_mask_local_gradient_contract():
    rng = np.random.default_rng(4)
    F = Tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)
    M = build_mask(F, 1.0, rng)
    G = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
    beta = 0.3
    out = apply_mask(F, M, beta)
    ops.sum(ops.mul(out, Tensor(G))).backward()
    expected = np.where(M == 1, np.float32(beta) * G, G)
    np.testing.assert_array_equal(F.grad, expected)


def test_apply_mask_gradcheck_frozen_mask():
    rng = np.random.default_rng(5)
    F = rng.uniform(-1, 1, (2, 3, 4, 4))
    M = build_mask(Tensor(F), 1.0, rng)
    G = Tensor(rng.uniform(-1, 1, F.shape), dtype=np.float64)
    assert gradcheck(lambda x: ops.sum(ops.mul(apply_mask(x, M, 0.5), G)), F) < 1e-5


def test_he_forward_eval_is_input_object():
    F = Tensor(np.random.default_rng(6).standard_normal((2, 3, 4, 4)))
    out = he_forward(F, HEConfig(beta=0.5), Mode.EVAL, np.random.default_rng(0))
    assert out is F


def test_he_forward_disabled_is_passthrough():
    F = Tensor(np.random.default_rng(6).standard_normal((2, 3, 4, 4)))
    assert he_forward(F, HEConfig(beta=0.2, enabled=False), Mode.TRAIN, np.random.default_rng(0)) is F


def test_he_forward_train_beta_one_bitwise():
    F = Tensor(np.random.default_rng(7).standard_normal((2, 3, 4, 4)))
    out = he_forward(F, HEConfig(beta=1.0), Mode.TRAIN, np.random.default_rng(0))
    assert out.data.tobytes() == F.data.tobytes()


def test_he_forward_train_composition():
    out = he_forward(Tensor(F22), HEConfig(beta=0.5, apply_prob=1.0), Mode.TRAIN, np.random.default_rng(0))
    np.testing.assert_array_equal(out.data[0, 0], [[1, 2], [3, 2]])


def test_score_examples():
    assert score(Tensor([[[[1.0, 2.0], [3.0, 2.0]]]])).data[0, 0] == 2.0
    assert not score(Tensor(np.zeros((2, 5, 3, 3)))).data.any()


def test_score_matches_summation():
    F = np.random.default_rng(8).standard_normal((3, 4, 5, 5)).astype(np.float32)
    expected = F.astype(np.float64).sum(axis=(2, 3)) / 25
    np.testing.assert_allclose(score(Tensor(F)).data, expected, rtol=1e-6)


@pytest.mark.parametrize("kw", [{"beta": -0.1}, {"beta": 1.5}, {"apply_prob": 2.0}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        HEConfig(**kw)


@pytest.mark.parametrize(
    "cfg",
    [HEConfig(beta=1.0), HEConfig(enabled=False), HEConfig(beta=0.3, apply_prob=0.0), HEConfig(beta=1.0, apply_prob=0.4)],
)
def test_noop_configs_collapse(cfg):
    assert cfg.is_identity
    assert cfg.canonical() == HEConfig(beta=1.0, apply_prob=1.0, enabled=False)


def test_active_config_is_kept():
    cfg = HEConfig(beta=0.5, apply_prob=0.7)
    assert not cfg.is_identity
    assert cfg.canonical() is cfg
