"""Adaptive multi-IMU fusion and the pose decoder.

Every IMU reading is embedded twice, into a "characteristic" space that is
scored against the image feature of the same transition, and a "detail" space
that carries the temporal information. The softmax of those scores over the IMUs
weights the detail embeddings, one weighted sequence per modality (acceleration,
angle). Two attention blocks, queried by the image features, then pull the IMU
sequences into the image stream before a bidirectional scan and linear head
decode the six pose parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .autodiff import ContractError, Tensor
from .autodiff import functional as F
from .config import NetConfig
from .encoder import BidirectionalScan, Encoder

class ImuEmbedding(nn.Module):
    """Two independent MLPs mapping [M, K, 3] readings to (char, detail) [M, K, d]."""

    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        num_imus: int = 1,
        shared: bool = True,
        scale: float = 1.0,
        char_gain: float = 1.0,
    ):
        self.scale = scale
        self.shared = shared
        count = 1 if shared else num_imus
        # a large char output range lets the affinity softmax move away from uniform
        self.char = [nn.MLP(rng, 3, dim, dim, out_scale=char_gain) for _ in range(count)]
        self.detail = [nn.MLP(rng, 3, dim, dim) for _ in range(count)]

    def forward(self, readings) -> tuple[Tensor, Tensor]:
        x = readings * self.scale
        if self.shared:
            return self.char[0](x), self.detail[0](x)
        if x.shape[0] != len(self.char):
            raise ContractError(f"unshared embedding built for {len(self.char)} IMUs, got {x.shape[0]}")
        chars = [self.char[j](x[j : j + 1]) for j in range(x.shape[0])]
        details = [self.detail[j](x[j : j + 1]) for j in range(x.shape[0])]
        return F.concat(chars, axis=0), F.concat(details, axis=0)


def affinity_weights(image_feat: Tensor, chars: Tensor) -> Tensor:
    """Softmax over IMUs of <F_I[i], char[j, i]> / sqrt(d); returns [M, K]."""
    if chars.shape[1:] != image_feat.shape:
        raise ContractError(f"char embeddings {chars.shape} do not match image features {image_feat.shape}")
    d = image_feat.shape[-1]
    logits = (chars * image_feat).sum(axis=-1) / math.sqrt(d)
    return F.softmax(logits, axis=0)


def weighted_temporal(weights: Tensor, details: Tensor) -> Tensor:
    """Convex combination of detail embeddings over IMUs: [M, K], [M, K, d] -> [K, d]."""
    M, K = weights.shape
    return (weights.reshape(M, K, 1) * details).sum(axis=0)


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    freq = np.exp(-math.log(1000.0) * np.arange(0, dim, 2) / dim)
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq[: dim // 2])
    return pe


class MultiHeadAttention(nn.Module):
    def __init__(self, rng: np.random.Generator, dim: int, heads: int, positional: bool = False):
        if dim % heads:
            raise ContractError(f"dimension {dim} is not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.positional = positional
        self.q = nn.Linear(rng, dim, dim)
        self.k = nn.Linear(rng, dim, dim)
        self.v = nn.Linear(rng, dim, dim)
        self.o = nn.Linear(rng, dim, dim)

    def _split(self, x: Tensor) -> Tensor:
        L = x.shape[0]
        return F.transpose(x.reshape(L, self.heads, self.dim // self.heads), (1, 0, 2))

    def attention_weights(self, q: Tensor, k: Tensor) -> Tensor:
        """[heads, Lq, Lk] row-stochastic attention matrices."""
        if self.positional:
            q = q + sinusoidal_positions(q.shape[0], self.dim)
            k = k + sinusoidal_positions(k.shape[0], self.dim)
        qh = self._split(self.q(q))
        kh = self._split(self.k(k))
        scores = F.matmul(qh, F.transpose(kh, (0, 2, 1))) / math.sqrt(self.dim // self.heads)
        return F.softmax(scores, axis=-1)

    def forward(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        if q.shape[-1] != self.dim or k.shape[-1] != self.dim or v.shape != k.shape:
            raise ContractError(f"attention shapes q {q.shape}, k {k.shape}, v {v.shape} do not fit dim {self.dim}")
        attn = self.attention_weights(q, k)
        out = F.matmul(attn, self._split(self.v(v)))
        out = F.transpose(out, (1, 0, 2)).reshape(q.shape[0], self.dim)
        return self.o(out)


@dataclass
class FusionOutput:
    fused: Tensor
    acc_feat: Tensor
    ang_feat: Tensor
    acc_weights: Tensor
    ang_weights: Tensor


class FusionModule(nn.Module):
    def __init__(self, rng: np.random.Generator, cfg: NetConfig):
        d = cfg.feature_dim
        shared, gain = cfg.share_imu_embeddings, cfg.char_init_gain
        self.acc_embed = ImuEmbedding(rng, d, cfg.num_imus, shared, char_gain=gain)
        self.ang_embed = ImuEmbedding(rng, d, cfg.num_imus, shared, scale=cfg.angle_input_scale, char_gain=gain)
        self.acc_attn = MultiHeadAttention(rng, d, cfg.heads, cfg.attn_positional)
        self.ang_attn = MultiHeadAttention(rng, d, cfg.heads, cfg.attn_positional)

    def forward(self, image_feat: Tensor, acc, ang) -> FusionOutput:
        acc_char, acc_detail = self.acc_embed(acc)
        ang_char, ang_detail = self.ang_embed(ang)
        w_acc = affinity_weights(image_feat, acc_char)
        w_ang = affinity_weights(image_feat, ang_char)
        f_acc = weighted_temporal(w_acc, acc_detail)
        f_ang = weighted_temporal(w_ang, ang_detail)
        fused = image_feat + self.acc_attn(image_feat, f_acc, f_acc) + self.ang_attn(image_feat, f_ang, f_ang)
        return FusionOutput(fused, f_acc, f_ang, w_acc, w_ang)


class PoseDecoder(nn.Module):
    """theta = Linear(x + BidirectionalScan(x))."""

    def __init__(self, rng: np.random.Generator, cfg: NetConfig):
        self.scan = BidirectionalScan(rng, cfg.feature_dim, cfg)
        self.head = nn.Linear(rng, cfg.feature_dim, 6)

    def forward(self, x: Tensor) -> Tensor:
        return self.head(x + self.scan(x))


@dataclass
class Prediction:
    theta: Tensor
    image_feat: Tensor
    acc_feat: Tensor | None = None
    ang_feat: Tensor | None = None
    acc_weights: Tensor | None = None
    ang_weights: Tensor | None = None


class PoseNet(nn.Module):
    """Full network; ``cfg.use_imu = False`` gives the image-only variant."""

    def __init__(self, cfg: NetConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.encoder = Encoder(rng, cfg)
        self.fusion = FusionModule(rng, cfg) if cfg.use_imu else None
        self.decoder = PoseDecoder(rng, cfg)

    def forward(self, frames, acc=None, ang=None) -> Prediction:
        image_feat = self.encoder(frames)
        if self.fusion is None:
            return Prediction(self.decoder(image_feat), image_feat)
        if acc is None or ang is None:
            raise ContractError("this network needs IMU accelerations and angles")
        K = image_feat.shape[0]
        for name, arr in (("acc", acc), ("ang", ang)):
            if arr.ndim != 3 or arr.shape[1:] != (K, 3):
                raise ContractError(f"{name} readings must be [M, {K}, 3], got {arr.shape}")
        fo = self.fusion(image_feat, acc, ang)
        return Prediction(self.decoder(fo.fused), image_feat, fo.acc_feat, fo.ang_feat, fo.acc_weights, fo.ang_weights)
