"""Image-sequence encoder: stem, strided residual blocks and multi-directional scan blocks.

Each stage is a residual block followed by a block with two scan paths:

* fine path: the whole [T, C, H, W] feature map is flattened into one token
  stream (row-major and column-major orderings) and scanned jointly over
  space and time;
* coarse path: the spatially pooled per-frame vector, summed with the
  previous stage's coarse output, is scanned forward and backward in time.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .autodiff import ContractError, Tensor, parameter
from .autodiff import functional as F
from .config import NetConfig
from .ssm import Order, SelectiveSSM, order_permutation, reverse_sequence


class Stem(nn.Module):
    """Two stride-2 3x3 convolutions: [N, 1, H, W] -> [N, C0, H/4, W/4]."""

    def __init__(self, rng: np.random.Generator, c_out: int):
        self.conv1 = nn.Conv2d(rng, 1, c_out, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(rng, c_out, c_out, 3, stride=2, padding=1)

    def forward(self, frames: Tensor) -> Tensor:
        if frames.ndim != 4 or frames.shape[1] != 1:
            raise ContractError(f"stem expects [N, 1, H, W] frames, got {frames.shape}")
        if frames.data.max() > 1.0 + 1e-6 or frames.data.min() < -1e-6:
            raise ContractError("frames must be normalised to [0, 1]")
        return F.silu(self.conv2(F.silu(self.conv1(frames))))


class ResidualBlock(nn.Module):
    """conv3x3/s2 -> SiLU -> conv3x3 on the main path, 1x1/s2 projection on the skip."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int):
        self.conv1 = nn.Conv2d(rng, c_in, c_out, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(rng, c_out, c_out, 3, stride=1, padding=1)
        self.skip = nn.Conv2d(rng, c_in, c_out, 1, stride=2, padding=0)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv2(F.silu(self.conv1(x))) + self.skip(x)


class ScanBranch(nn.Module):
    """Causal depthwise conv -> SiLU -> selective SSM along one token ordering."""

    def __init__(self, rng: np.random.Generator, d_inner: int, d_state: int, kernel: int):
        self.conv_w = parameter(rng.uniform(-1, 1, size=(d_inner, kernel)) / np.sqrt(kernel))
        self.conv_b = parameter(np.zeros(d_inner))
        self.ssm = SelectiveSSM(rng, d_inner, d_state)

    def forward(self, seq: Tensor) -> Tensor:
        return self.ssm(F.silu(F.conv1d_depthwise(seq, self.conv_w, self.conv_b)))


class FineScan(nn.Module):
    """Joint spatio-temporal scan of a [T, C, H, W] map in row- and column-major order.

    out = x + Proj(SiLU(z) * (SSM_row(u_row) + SSM_col(u_col))), with x-branch and
    gate z both projected from the layer-normed tokens.
    """

    def __init__(self, rng: np.random.Generator, channels: int, cfg: NetConfig):
        inner = cfg.expand * channels
        self.norm = nn.LayerNorm(channels)
        self.up = nn.Linear(rng, channels, inner)
        self.gate = nn.Linear(rng, channels, inner)
        self.row = ScanBranch(rng, inner, cfg.d_state, cfg.conv_kernel)
        self.col = self.row if cfg.share_fine_directions else ScanBranch(rng, inner, cfg.d_state, cfg.conv_kernel)
        self.out = nn.Linear(rng, inner, channels)

    def named_parameters(self, prefix: str = ""):
        seen = set()
        for name, p in super().named_parameters(prefix):
            if id(p) not in seen:
                seen.add(id(p))
                yield name, p

    def forward(self, x: Tensor) -> Tensor:
        T, C, H, W = x.shape
        tokens = F.transpose(x, (0, 2, 3, 1)).reshape(T * H * W, C)
        normed = self.norm(tokens)
        up = self.up(normed)
        gate = F.silu(self.gate(normed))
        mixed = None
        for order, branch in ((Order.ROW_MAJOR, self.row), (Order.COL_MAJOR, self.col)):
            perm = order_permutation(order, T, H, W)
            y = branch(F.take(up, perm, axis=0))
            y = F.take(y, np.argsort(perm), axis=0)
            mixed = y if mixed is None else mixed + y
        delta = self.out(gate * mixed).reshape(T, H, W, C)
        return x + F.transpose(delta, (0, 3, 1, 2))


class DirectionalMixer(nn.Module):
    """Gated scan of a [L, D] sequence in one temporal direction."""

    def __init__(self, rng: np.random.Generator, dim: int, cfg: NetConfig, reverse: bool):
        inner = cfg.expand * dim
        self.reverse = reverse
        self.norm = nn.LayerNorm(dim)
        self.up = nn.Linear(rng, dim, inner)
        self.gate = nn.Linear(rng, dim, inner)
        self.branch = ScanBranch(rng, inner, cfg.d_state, cfg.conv_kernel)
        self.out = nn.Linear(rng, inner, dim)

    def forward(self, seq: Tensor) -> Tensor:
        if self.reverse:
            seq = reverse_sequence(seq)
        normed = self.norm(seq)
        y = self.out(self.branch(self.up(normed)) * F.silu(self.gate(normed)))
        return reverse_sequence(y) if self.reverse else y


class BidirectionalScan(nn.Module):
    """Sum of a forward-time and a backward-time directional mixer."""

    def __init__(self, rng: np.random.Generator, dim: int, cfg: NetConfig):
        self.dim = dim
        self.fwd = DirectionalMixer(rng, dim, cfg, reverse=False)
        self.bwd = DirectionalMixer(rng, dim, cfg, reverse=True)

    def forward(self, seq: Tensor) -> Tensor:
        if seq.ndim != 2 or seq.shape[1] != self.dim:
            raise ContractError(f"expected a [L, {self.dim}] sequence, got {seq.shape}")
        return self.fwd(seq) + self.bwd(seq)

    def swapped(self) -> "BidirectionalScan":
        """Copy with forward and backward parameter sets exchanged."""
        twin = self.clone()
        twin.fwd, twin.bwd = twin.bwd, twin.fwd
        twin.fwd.reverse, twin.bwd.reverse = False, True
        return twin


class CoarseScan(nn.Module):
    """Per-frame pooled features (+ previous coarse output) scanned in both time directions."""

    def __init__(self, rng: np.random.Generator, channels: int, cfg: NetConfig):
        self.channels = channels
        self.coarse_dim = cfg.coarse_dim
        self.proj = nn.Linear(rng, channels, cfg.coarse_dim)
        self.scan = BidirectionalScan(rng, cfg.coarse_dim, cfg)

    def tokens(self, x: Tensor, prev: Tensor | None = None) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ContractError(f"coarse scan expects {self.channels} channels, got {x.shape}")
        seq = self.proj(F.global_avg_pool(x))
        if prev is not None:
            if prev.shape != seq.shape:
                raise ContractError(f"previous coarse output {prev.shape} does not chain with {seq.shape}")
            seq = seq + prev
        return seq

    def forward(self, x: Tensor, prev: Tensor | None = None) -> Tensor:
        return self.scan(self.tokens(x, prev))


class Stage(nn.Module):
    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, cfg: NetConfig):
        self.res = ResidualBlock(rng, c_in, c_out)
        self.fine = FineScan(rng, c_out, cfg)
        self.coarse = CoarseScan(rng, c_out, cfg)

    def forward(self, x: Tensor, prev: Tensor | None):
        x = self.res(x)
        return self.fine(x), self.coarse(x, prev)


class Encoder(nn.Module):
    """frames [N, 1, H, W] -> per-transition image features F_I [N-1, d]."""

    def __init__(self, rng: np.random.Generator, cfg: NetConfig):
        cfg.validate()
        self.cfg = cfg
        self.stem = Stem(rng, cfg.stem_channels)
        chans = (cfg.stem_channels,) + tuple(cfg.channels)
        self.stages = [Stage(rng, chans[i], chans[i + 1], cfg) for i in range(cfg.num_stages)]
        self.head = nn.Linear(rng, chans[-1] + cfg.coarse_dim, cfg.feature_dim)
        self.pair = nn.MLP(rng, 2 * cfg.feature_dim, cfg.feature_dim, cfg.feature_dim)

    def frame_features(self, frames: Tensor) -> Tensor:
        x = self.stem(frames)
        coarse = None
        for stage in self.stages:
            x, coarse = stage(x, coarse)
        return self.head(F.concat([F.global_avg_pool(x), coarse], axis=1))

    def forward(self, frames: Tensor) -> Tensor:
        if frames.shape[0] < 2:
            raise ContractError("need at least two frames to form a transition")
        f = self.frame_features(frames)
        return self.pair(F.concat([f[:-1], f[1:]], axis=1))
