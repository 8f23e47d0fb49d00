import numpy as np
import pytest

from freehand3d import nn
from freehand3d.autodiff import ContractError, Tensor, grad_check
from freehand3d.config import NetConfig
from freehand3d.fusion import (
    FusionModule,
    ImuEmbedding,
    MultiHeadAttention,
    PoseDecoder,
    PoseNet,
    affinity_weights,
    weighted_temporal,
)

from gradcases import MODULE_CASES, max_case_error


def tiny(**kw):
    base = dict(
        stem_channels=4, channels=(6, 8), image_size=(16, 16), feature_dim=8, coarse_dim=6,
        d_state=3, conv_kernel=3, heads=2, num_imus=2,
    )
    base.update(kw)
    return NetConfig(**base)


def test_embedding_zero_input_gives_bias_rows():
    emb = ImuEmbedding(np.random.default_rng(0), 8)
    char, detail = emb(np.zeros((1, 5, 3)))
    for out, mlp in ((char, emb.char[0]), (detail, emb.detail[0])):
        expected = mlp(Tensor(np.zeros((1, 3)))).data
        np.testing.assert_allclose(out.data[0], np.broadcast_to(expected, (5, 8)))


def test_embedding_shared_across_imus():
    emb = ImuEmbedding(np.random.default_rng(0), 8, num_imus=2)
    reading = np.random.default_rng(1).normal(size=(1, 4, 3))
    char, detail = emb(np.concatenate([reading, reading]))
    np.testing.assert_array_equal(char.data[0], char.data[1])
    np.testing.assert_array_equal(detail.data[0], detail.data[1])


def test_unshared_embedding_checks_imu_count():
    emb = ImuEmbedding(np.random.default_rng(0), 8, num_imus=2, shared=False)
    with pytest.raises(ContractError):
        emb(np.zeros((3, 4, 3)))


def test_embedding_grad_check():
    rng = np.random.default_rng(2)
    emb = ImuEmbedding(rng, 8)
    w1, w2 = rng.normal(size=(1, 4, 8)), rng.normal(size=(1, 4, 8))

    def f(x):
        c, d = emb(x)
        return (c * w1).sum() + (d * w2).sum()

    assert grad_check(f, Tensor(rng.normal(size=(1, 4, 3))), 1e-6) < 1e-4


def test_affinity_identical_chars():
    rng = np.random.default_rng(0)
    chars = np.broadcast_to(rng.normal(size=(1, 5, 8)), (2, 5, 8))
    w = affinity_weights(Tensor(rng.normal(size=(5, 8))), Tensor(chars)).data
    np.testing.assert_allclose(w, 0.5)


def test_affinity_hand_softmax():
    d = 4
    image = np.zeros((1, d))
    image[0, 0] = 1.0
    chars = np.zeros((2, 1, d))
    chars[0, 0, 0] = np.sqrt(d)  # scaled logit 1 vs 0
    w = affinity_weights(Tensor(image), Tensor(chars)).data[:, 0]
    np.testing.assert_allclose(w, [0.7311, 0.2689], atol=1e-4)


def test_affinity_single_imu():
    rng = np.random.default_rng(0)
    w = affinity_weights(Tensor(rng.normal(size=(6, 8))), Tensor(rng.normal(size=(1, 6, 8)))).data
    np.testing.assert_array_equal(w, 1.0)


def test_affinity_simplex():
    rng = np.random.default_rng(3)
    w = affinity_weights(Tensor(5 * rng.normal(size=(9, 8))), Tensor(5 * rng.normal(size=(4, 9, 8)))).data
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=0), 1.0)


def test_weighted_temporal_examples():
    details = np.zeros((2, 1, 4))
    details[0, 0, 0] = 4.0
    details[1, 0, 1] = 4.0
    out = weighted_temporal(Tensor([[0.25], [0.75]]), Tensor(details)).data
    np.testing.assert_allclose(out, [[1.0, 3.0, 0.0, 0.0]])


def test_weighted_temporal_single_and_identical():
    rng = np.random.default_rng(0)
    d = rng.normal(size=(1, 5, 4))
    np.testing.assert_array_equal(weighted_temporal(Tensor(np.ones((1, 5))), Tensor(d)).data, d[0])
    w = rng.dirichlet(np.ones(3), size=5).T
    out = weighted_temporal(Tensor(w), Tensor(np.repeat(d, 3, axis=0))).data
    np.testing.assert_allclose(out, d[0], atol=1e-12)


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(0)
    mha = MultiHeadAttention(rng, 8, 2)
    a = mha.attention_weights(Tensor(rng.normal(size=(3, 8))), Tensor(rng.normal(size=(5, 8)))).data
    assert a.shape == (2, 3, 5)
    np.testing.assert_allclose(a.sum(axis=-1), 1.0)


def test_attention_single_key_broadcasts_value():
    rng = np.random.default_rng(0)
    mha = MultiHeadAttention(rng, 8, 2)
    k = Tensor(rng.normal(size=(1, 8)))
    out = mha(Tensor(rng.normal(size=(4, 8))), k, k).data
    expected = mha.o(mha.v(k)).data
    np.testing.assert_allclose(out, np.broadcast_to(expected, (4, 8)), atol=1e-12)


def test_attention_identity_projections_pick_matching_row():
    d = 8
    mha = MultiHeadAttention(np.random.default_rng(0), d, 1)
    for lin in (mha.q, mha.k, mha.v, mha.o):
        lin.weight.data[...] = np.eye(d)
        nn.zero_(lin.bias)
    q = np.eye(d)[:3] * 6.0
    attn = mha.attention_weights(Tensor(q), Tensor(q)).data[0]
    assert np.all(np.argmax(attn, axis=1) == np.arange(3))
    e = np.exp(36.0 / np.sqrt(d))
    assert attn[0, 0] == pytest.approx(e / (e + 2), rel=1e-12)


def test_attention_bad_heads():
    with pytest.raises(ContractError):
        MultiHeadAttention(np.random.default_rng(0), 10, 4)


def test_attention_grad_check():
    rng = np.random.default_rng(1)
    mha = MultiHeadAttention(rng, 8, 2)
    kv = Tensor(rng.normal(size=(3, 8)))
    w = rng.normal(size=(3, 8))
    assert grad_check(lambda q: (mha(q, kv, kv) * w).sum(), Tensor(rng.normal(size=(3, 8))), 1e-6) < 1e-4


def test_fusion_degenerate_path():
    rng = np.random.default_rng(0)
    cfg = tiny()
    fusion = FusionModule(rng, cfg)
    decoder = PoseDecoder(rng, cfg)
    for lin in (fusion.acc_attn.o, fusion.ang_attn.o, decoder.scan.fwd.out, decoder.scan.bwd.out):
        nn.zero_(lin.weight)
        nn.zero_(lin.bias)
    fi = Tensor(rng.normal(size=(5, 8)))
    out = fusion(fi, rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 5, 3)))
    np.testing.assert_allclose(decoder(out.fused).data, decoder.head(fi).data, atol=1e-12)


def test_posenet_two_frames():
    net = PoseNet(tiny())
    rng = np.random.default_rng(1)
    pred = net(Tensor(rng.uniform(size=(2, 1, 16, 16))), rng.normal(size=(2, 1, 3)), rng.normal(size=(2, 1, 3)))
    assert pred.theta.shape == (1, 6)
    assert pred.ang_weights.shape == (2, 1)


def test_posenet_imu_shape_contract():
    net = PoseNet(tiny())
    rng = np.random.default_rng(1)
    with pytest.raises(ContractError):
        net(Tensor(rng.uniform(size=(3, 1, 16, 16))), rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 2, 3)))
    with pytest.raises(ContractError):
        net(Tensor(rng.uniform(size=(3, 1, 16, 16))))


def test_duplicated_imus_match_single():
    rng = np.random.default_rng(2)
    frames = Tensor(rng.uniform(size=(4, 1, 16, 16)))
    acc, ang = rng.normal(size=(1, 3, 3)), rng.normal(size=(1, 3, 3))
    one = PoseNet(tiny(num_imus=1), seed=5)(frames, acc, ang).theta.data
    many = PoseNet(tiny(num_imus=3), seed=5)(frames, np.repeat(acc, 3, 0), np.repeat(ang, 3, 0)).theta.data
    np.testing.assert_allclose(many, one, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_fuse_and_decode_grad_check(seed):
    assert max_case_error(MODULE_CASES["fusion"], seed) < 1e-4
