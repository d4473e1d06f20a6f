"""Encoder: gate initialisation, block composition, patch merging and stage shapes."""
import numpy as np
import pytest

from sgtn.encoder import (DESK, EncoderConfig, LRCPair, LSwinBlock, LSwinEncoder, PatchMerge, SwinPair,
                          encoder_forward, patch_partition)
from sgtn.numerics import ShapeError, Tensor, no_grad, precision, seeded_rng

TINY = EncoderConfig(embed_dim=8, depths=(1, 1, 1, 1), heads=(1, 2, 2, 4), window=2)


def test_desk_shapes():
    enc = LSwinEncoder(seeded_rng(0), DESK)
    with no_grad():
        y, feats = enc(np.zeros((2, 64, 64, 3), dtype=np.float32))
    assert y.shape == (2, 16, 16, 24)
    assert [f.shape for f in feats] == [(2, 16, 16, 24), (2, 8, 8, 48), (2, 4, 4, 96), (2, 2, 2, 192)]


def test_gates_start_at_one_and_zero():
    enc = LSwinEncoder(seeded_rng(0), TINY)
    for gate in enc.gates():
        assert float(gate.alpha.data) == 1.0 and float(gate.beta.data) == 0.0
        assert gate.alpha.trainable and gate.beta.trainable


@pytest.mark.parametrize("seed", range(5))
def test_initial_lswin_equals_swin_only_exactly(seed):
    a = LSwinEncoder(seeded_rng(seed), TINY)
    b = LSwinEncoder(seeded_rng(seed), TINY.with_variant("swin_only"))
    image = np.random.default_rng(seed).normal(size=(1, 32, 32, 3)).astype(np.float32)
    with no_grad():
        ya, fa = encoder_forward(image, a.cfg, a)
        yb, fb = encoder_forward(image, b.cfg, b)
    np.testing.assert_array_equal(ya.data, yb.data)
    for u, v in zip(fa, fb):
        np.testing.assert_array_equal(u.data, v.data)


def test_variant_gates():
    swin = LSwinBlock(seeded_rng(0), 8, 2, 2, "swin_only")
    lrc = LSwinBlock(seeded_rng(0), 8, 2, 2, "lrc_only")
    assert not swin.gate.beta.trainable and float(swin.gate.beta.data) == 0.0
    assert not lrc.gate.alpha.trainable and float(lrc.gate.alpha.data) == 0.0
    assert float(lrc.gate.beta.data) == 1.0


def test_lrc_only_block_is_the_axial_pair(rng):
    block = LSwinBlock(seeded_rng(1), 8, 2, 2, "lrc_only")
    x = rng.normal(size=(1, 4, 4, 8))
    with no_grad():
        np.testing.assert_array_equal(block(Tensor(x)).data, block.lrc(Tensor(x)).data)


def test_block_is_gated_sum_of_pairs(rng):
    with precision(np.float64):
        block = LSwinBlock(seeded_rng(2), 8, 2, 2).astype(np.float64)
        block.gate.alpha.data[...] = 0.3
        block.gate.beta.data[...] = -1.7
        x = Tensor(rng.normal(size=(1, 6, 6, 8)))
        with no_grad():
            got = block(x).data
            want = 0.3 * block.swin(x).data - 1.7 * block.lrc(x).data
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_swin_pair_is_regular_then_shifted(rng):
    with precision(np.float64):
        pair = SwinPair(seeded_rng(3), 8, 2, 4).astype(np.float64)
        x = Tensor(rng.normal(size=(1, 8, 8, 8)))
        with no_grad():
            np.testing.assert_allclose(pair(x).data, pair.shifted(pair.regular(x)).data, atol=0)
    assert pair.regular.cfg.shift == 0 and pair.shifted.cfg.shift == 2


def test_lrc_pair_is_column_then_row(rng):
    pair = LRCPair(seeded_rng(4), 8, 2)
    assert pair.vertical.cfg.axis == "column" and pair.horizontal.cfg.axis == "row"


def test_both_gates_receive_gradient(rng):
    block = LSwinBlock(seeded_rng(5), 8, 2, 2)
    out = block(Tensor(rng.normal(size=(1, 4, 4, 8))))
    (out * out).sum().backward()
    assert block.gate.alpha.grad is not None and abs(float(block.gate.alpha.grad)) > 0
    assert block.gate.beta.grad is not None and abs(float(block.gate.beta.grad)) > 0


def test_patch_merge_gather_order():
    x = np.arange(2 * 4 * 4 * 1, dtype=np.float64).reshape(2, 4, 4, 1)
    got = PatchMerge.gather(Tensor(x)).data
    want = np.concatenate([x[:, 0::2, 0::2], x[:, 1::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 1::2]], axis=-1)
    np.testing.assert_array_equal(got, want)


def test_patch_partition_order():
    img = np.arange(8 * 8 * 3, dtype=np.float64).reshape(1, 8, 8, 3)
    got = patch_partition(Tensor(img), 4).data
    assert got.shape == (1, 2, 2, 48)
    np.testing.assert_array_equal(got[0, 1, 0], img[0, 4:8, 0:4].reshape(-1))


def test_rejects_bad_extents_and_config():
    enc = LSwinEncoder(seeded_rng(0), TINY)
    with pytest.raises(ShapeError, match="32"):
        enc(np.zeros((1, 48, 40, 3)))
    with pytest.raises(ValueError, match="variant"):
        EncoderConfig(variant="dense")
    with pytest.raises(ValueError, match="different config"):
        encoder_forward(np.zeros((1, 32, 32, 3)), TINY.with_variant("lrc_only"), enc)
