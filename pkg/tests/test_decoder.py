"""Decoder cascade: shapes, sigmoid range, dropout discipline, grads."""
import numpy as np
import numpy.testing as npt
import pytest

from tscnet.autodiff import Tensor, no_grad, sum_
from tscnet.decoder import build_decoder, decode
from tscnet.errors import ContractError
from tscnet.nn import seed_dropouts


def features(rng, c, s, dtype=np.float32):
    f2 = Tensor(rng.standard_normal((c, s, s)).astype(dtype))
    f3 = Tensor(rng.standard_normal((c, s // 2, s // 2)).astype(dtype))
    f4 = Tensor(rng.standard_normal((c, s // 4, s // 4)).astype(dtype))
    return f2, f3, f4


def test_decode_shapes():
    rng = np.random.default_rng(0)
    sp = build_decoder(np.random.default_rng(1), 8, 0.1, np.float32)
    sp.eval()
    f2, f3, f4 = features(rng, 8, 64)
    with no_grad():
        s2, s3, s4 = decode(sp, f2, f3, f4)
    assert s2.shape == (1, 64, 64)
    assert s3.shape == (1, 64, 64)
    assert s4.shape == (1, 32, 32)
    for m in (s2, s3, s4):
        assert np.all(m.data > 0.0) and np.all(m.data < 1.0)


def test_zero_features_give_half_maps():
    sp = build_decoder(np.random.default_rng(2), 4, 0.1, np.float32)
    sp.eval()
    zeros = [Tensor(np.zeros((4, s, s), dtype=np.float32)) for s in (16, 8, 4)]
    with no_grad():
        maps = decode(sp, *zeros)
    for m in maps:
        npt.assert_array_equal(m.data, np.full_like(m.data, 0.5))


def test_eval_mode_is_deterministic():
    rng = np.random.default_rng(3)
    sp = build_decoder(np.random.default_rng(4), 4, 0.5, np.float32)
    sp.eval()
    f2, f3, f4 = features(rng, 4, 16)
    with no_grad():
        a = decode(sp, f2, f3, f4)
        b = decode(sp, f2, f3, f4)
    for x, y in zip(a, b):
        npt.assert_array_equal(x.data, y.data)


def test_training_dropout_is_seeded_and_active():
    rng = np.random.default_rng(5)
    f2, f3, f4 = features(rng, 4, 16)

    def run(seed):
        sp = build_decoder(np.random.default_rng(6), 4, 0.5, np.float32)
        sp.train()
        seed_dropouts(sp, np.random.default_rng(seed))
        with no_grad():
            return decode(sp, f2, f3, f4)

    same_a = run(7)
    same_b = run(7)
    other = run(8)
    for x, y in zip(same_a, same_b):
        npt.assert_array_equal(x.data, y.data)
    assert any(not np.array_equal(x.data, y.data) for x, y in zip(same_a, other))
    # and training-mode output differs from eval-mode output (dropout active)
    sp = build_decoder(np.random.default_rng(6), 4, 0.5, np.float32)
    sp.eval()
    with no_grad():
        eval_maps = decode(sp, f2, f3, f4)
    assert any(not np.array_equal(x.data, y.data) for x, y in zip(same_a, eval_maps))


def test_gradient_reaches_every_decoder_parameter():
    rng = np.random.default_rng(9)
    sp = build_decoder(np.random.default_rng(10), 4, 0.1, np.float64)
    sp.train()
    seed_dropouts(sp, np.random.default_rng(11))
    f2, f3, f4 = features(rng, 4, 16, np.float64)
    s2, s3, s4 = decode(sp, f2, f3, f4)
    loss = sum_(s2) + sum_(s3) + sum_(s4)
    loss.backward()
    for name, p in sp.named_parameters():
        assert p.grad is not None and np.abs(p.grad).max() > 0, name


def test_fusion_shape_mismatch_raises():
    sp = build_decoder(np.random.default_rng(12), 4, 0.1, np.float32)
    sp.eval()
    f2 = Tensor(np.zeros((4, 16, 16), dtype=np.float32))
    f3 = Tensor(np.zeros((4, 16, 16), dtype=np.float32))  # wrong level size
    f4 = Tensor(np.zeros((4, 4, 4), dtype=np.float32))
    with pytest.raises(ContractError):
        with no_grad():
            decode(sp, f2, f3, f4)
