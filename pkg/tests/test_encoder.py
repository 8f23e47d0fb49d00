import numpy as np
import pytest

from freehand3d import nn
from freehand3d.autodiff import ContractError, Tensor, backward, grad_check, parameter
from freehand3d.config import ConfigError, NetConfig
from freehand3d.encoder import BidirectionalScan, CoarseScan, Encoder, FineScan, ResidualBlock, Stem
from freehand3d.ssm import reverse_sequence


def small_cfg(**kw):
    base = dict(stem_channels=4, channels=(6, 8), feature_dim=8, coarse_dim=6, d_state=3, conv_kernel=3, heads=2)
    base.update(kw)
    return NetConfig(**base)


def test_stem_shape():
    stem = Stem(np.random.default_rng(0), 8)
    x = Tensor(np.random.default_rng(1).uniform(size=(4, 1, 32, 32)))
    assert stem(x).shape == (4, 8, 8, 8)


def test_stem_zero_frames_constant_over_time():
    stem = Stem(np.random.default_rng(0), 8)
    out = stem(Tensor(np.zeros((3, 1, 16, 16)))).data
    np.testing.assert_array_equal(out[0], out[1])
    np.testing.assert_array_equal(out[1], out[2])


def test_stem_identical_frames():
    stem = Stem(np.random.default_rng(0), 4)
    frame = np.random.default_rng(2).uniform(size=(1, 1, 16, 16))
    out = stem(Tensor(np.concatenate([frame, frame]))).data
    np.testing.assert_array_equal(out[0], out[1])


@pytest.mark.parametrize("bad", [1.5, -0.1])
def test_stem_rejects_unnormalised(bad):
    stem = Stem(np.random.default_rng(0), 4)
    x = np.zeros((2, 1, 8, 8))
    x[0, 0, 0, 0] = bad
    with pytest.raises(ContractError):
        stem(Tensor(x))


def test_residual_block_shape():
    block = ResidualBlock(np.random.default_rng(0), 8, 16)
    assert block(Tensor(np.random.default_rng(1).normal(size=(4, 8, 8, 8)))).shape == (4, 16, 4, 4)


def test_residual_block_degenerate_path():
    block = ResidualBlock(np.random.default_rng(0), 4, 4)
    for p in (block.conv1.weight, block.conv1.bias, block.conv2.weight, block.conv2.bias):
        nn.zero_(p)
    block.skip.weight.data[...] = np.eye(4)[:, :, None, None]
    x = np.random.default_rng(1).normal(size=(2, 4, 6, 6))
    np.testing.assert_allclose(block(Tensor(x)).data, x[:, :, ::2, ::2])


def test_residual_block_grad_check():
    rng = np.random.default_rng(3)
    block = ResidualBlock(rng, 4, 5)
    w = rng.normal(size=(2, 5, 2, 2))
    assert grad_check(lambda x: (block(x) * w).sum(), Tensor(rng.normal(size=(2, 4, 4, 4))), 1e-6) < 1e-4


def test_fine_scan_identity_at_zero_projection():
    block = FineScan(np.random.default_rng(0), 4, small_cfg())
    nn.zero_(block.out.weight)
    nn.zero_(block.out.bias)
    x = np.random.default_rng(1).normal(size=(3, 4, 4, 4))
    np.testing.assert_array_equal(block(Tensor(x)).data, x)


def test_fine_scan_mixes_time():
    rng = np.random.default_rng(0)
    block = FineScan(rng, 4, small_cfg())
    x = rng.normal(size=(3, 4, 4, 4))
    fwd = block(Tensor(x)).data
    rev = block(Tensor(x[::-1].copy())).data[::-1]
    assert np.max(np.abs(fwd - rev)) > 1e-6


def test_fine_scan_grad_check():
    rng = np.random.default_rng(4)
    block = FineScan(rng, 2, small_cfg())
    block.out.weight.data[...] = rng.normal(size=block.out.weight.shape)
    w = rng.normal(size=(2, 2, 4, 4))
    assert grad_check(lambda x: (block(x) * w).sum(), Tensor(rng.normal(size=(2, 2, 4, 4))), 1e-5) < 1e-4


@pytest.mark.parametrize("shared, expected", [(False, 2), (True, 1)])
def test_fine_scan_direction_sharing(shared, expected):
    block = FineScan(np.random.default_rng(0), 4, small_cfg(share_fine_directions=shared))
    names = [n for n, _ in block.named_parameters() if n.endswith("log_a")]
    assert len(names) == expected


def test_coarse_scan_constant_tokens():
    cs = CoarseScan(np.random.default_rng(0), 3, small_cfg(coarse_dim=3))
    cs.proj.weight.data[...] = np.eye(3)
    nn.zero_(cs.proj.bias)
    x = np.broadcast_to(np.random.default_rng(1).normal(size=(1, 3, 2, 2)), (5, 3, 2, 2)).copy()
    tokens = cs.tokens(Tensor(x), Tensor(np.zeros((5, 3)))).data
    np.testing.assert_array_equal(tokens, np.broadcast_to(tokens[0], tokens.shape))


def test_coarse_scan_zero_prev_equals_absent():
    rng = np.random.default_rng(0)
    cs = CoarseScan(rng, 3, small_cfg())
    x = Tensor(rng.normal(size=(4, 3, 2, 2)))
    np.testing.assert_array_equal(cs(x).data, cs(x, Tensor(np.zeros((4, 6)))).data)


def test_coarse_scan_chain_mismatch():
    rng = np.random.default_rng(0)
    cs = CoarseScan(rng, 3, small_cfg())
    with pytest.raises(ContractError):
        cs(Tensor(rng.normal(size=(4, 3, 2, 2))), Tensor(np.zeros((4, 5))))
    with pytest.raises(ContractError):
        cs(Tensor(rng.normal(size=(4, 2, 2, 2))))


def test_bidirectional_reversal_symmetry():
    rng = np.random.default_rng(0)
    scan = BidirectionalScan(rng, 5, small_cfg())
    x = rng.normal(size=(7, 5))
    a = scan(Tensor(x)).data
    b = scan.swapped()(Tensor(reverse_sequence(x))).data
    np.testing.assert_allclose(reverse_sequence(b), a, atol=1e-12)


@pytest.mark.parametrize("N", [2, 4, 8])
@pytest.mark.parametrize("size", [16, 32])
def test_encoder_shapes(N, size):
    cfg = small_cfg(image_size=(size, size), channels=(6, 8) if size == 16 else (6, 8, 10))
    enc = Encoder(np.random.default_rng(0), cfg)
    out = enc(Tensor(np.random.default_rng(1).uniform(size=(N, 1, size, size))))
    assert out.shape == (N - 1, cfg.feature_dim)


def test_encoder_needs_two_frames():
    enc = Encoder(np.random.default_rng(0), small_cfg(image_size=(16, 16)))
    with pytest.raises(ContractError):
        enc(Tensor(np.zeros((1, 1, 16, 16))))


def test_encoder_not_scale_invariant():
    enc = Encoder(np.random.default_rng(0), small_cfg(image_size=(16, 16)))
    x = np.random.default_rng(1).uniform(0, 0.5, size=(3, 1, 16, 16))
    assert np.max(np.abs(enc(Tensor(x)).data - enc(Tensor(2 * x)).data)) > 1e-9


def test_encoder_grad_wrt_stem_weights():
    rng = np.random.default_rng(2)
    enc = Encoder(rng, small_cfg(image_size=(16, 16)))
    frames = Tensor(rng.uniform(size=(3, 1, 16, 16)))
    w = enc.stem.conv1.weight

    def f(p):
        enc.stem.conv1.weight = p
        return enc(frames).sum()

    try:
        assert grad_check(f, Tensor(w.data.copy()), 1e-6) < 1e-4
    finally:
        enc.stem.conv1.weight = w


@pytest.mark.parametrize("seed", range(10))
def test_encoder_gradients_finite(seed):
    rng = np.random.default_rng(seed)
    enc = Encoder(rng, small_cfg(image_size=(16, 16)))
    backward(enc(Tensor(rng.uniform(size=(4, 1, 16, 16)))).sum())
    for name, p in enc.named_parameters():
        assert p.grad is not None and np.isfinite(p.grad).all(), name


@pytest.mark.parametrize(
    "kw",
    [dict(image_size=(30, 32)), dict(channels=(8, 8)), dict(feature_dim=10, heads=4), dict(num_imus=0)],
)
def test_net_config_validation(kw):
    with pytest.raises(ConfigError):
        small_cfg(**kw).validate()


def test_forward_is_deterministic():
    frames = Tensor(np.random.default_rng(1).uniform(size=(3, 1, 16, 16)))
    a = Encoder(np.random.default_rng(0), small_cfg(image_size=(16, 16)))(frames).data
    b = Encoder(np.random.default_rng(0), small_cfg(image_size=(16, 16)))(frames).data
    assert a.tobytes() == b.tobytes()


def test_parameter_helper_requires_grad():
    assert parameter(np.zeros(2)).requires_grad
