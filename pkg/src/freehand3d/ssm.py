"""Discrete selective state-space recurrence and directional token orderings."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import nn
from .autodiff import ContractError, Tensor, parameter
from .autodiff import functional as F


class Order(str, Enum):
    ROW_MAJOR = "row_major"
    COL_MAJOR = "col_major"
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass
class SsmParams:
    """Per-step SSM coefficients for one sequence.

    ``A`` [D, S] must be negative for a decaying state; ``delta`` [L, D] is the
    positive step size, ``B``/``C`` [L, S] the input-dependent projections and
    ``D`` [D] the skip coefficient.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    delta: np.ndarray
    D: np.ndarray


def discretize(A, B_t, delta_t):
    """Zero-order-hold decay with the Euler input rule: (exp(delta*A), delta*B)."""
    A = np.asarray(A, dtype=np.float64)
    B_t = np.asarray(B_t, dtype=np.float64)
    delta_t = np.asarray(delta_t, dtype=np.float64)
    if np.any(delta_t <= 0):
        raise ContractError("discretize: step size must be strictly positive")
    return np.exp(delta_t * A), delta_t * B_t


def _check(x: np.ndarray, p: SsmParams) -> tuple[int, int, int]:
    if x.ndim != 2:
        raise ContractError(f"expected a [L, D] sequence, got {x.shape}")
    L, D = x.shape
    S = p.A.shape[1]
    if L < 1:
        raise ContractError("sequence must be non-empty")
    if p.A.shape != (D, S) or p.B.shape != (L, S) or p.C.shape != (L, S) or p.delta.shape != (L, D) or p.D.shape != (D,):
        raise ContractError("SSM parameter shapes do not match the input sequence")
    return L, D, S


def selective_scan_sequential(x, params: SsmParams, return_states: bool = False):
    """Reference recurrence, one step at a time, starting from h_0 = 0."""
    x = np.asarray(x, dtype=np.float64)
    L, D, S = _check(x, params)
    h = np.zeros((D, S))
    y = np.empty((L, D))
    states = np.empty((L, D, S))
    for t in range(L):
        a_bar, b_bar = discretize(params.A, params.B[t][None, :], params.delta[t][:, None])
        h = a_bar * h + b_bar * x[t][:, None]
        y[t] = h @ params.C[t] + params.D * x[t]
        states[t] = h
    return (y, states) if return_states else y


def selective_scan_chunked(x, params: SsmParams, chunk: int):
    """Same result as the sequential scan, evaluated chunk by chunk.

    Within a chunk every state is written in closed form from the carried-in
    state and the chunk's inputs using cumulative log-decays, so the only serial
    dependency is the state handed across chunk boundaries.
    """
    if chunk < 1:
        raise ContractError("chunk must be a positive integer")
    x = np.asarray(x, dtype=np.float64)
    L, D, S = _check(x, params)
    y = np.empty((L, D))
    h = np.zeros((D, S))
    for start in range(0, L, chunk):
        sl = slice(start, min(start + chunk, L))
        dt = params.delta[sl]  # [c, D]
        c = dt.shape[0]
        log_decay = dt[:, :, None] * params.A[None]  # [c, D, S]
        cum = np.cumsum(log_decay, axis=0)
        inputs = dt[:, :, None] * params.B[sl][:, None, :] * x[sl][:, :, None]  # [c, D, S]
        # exp(cum_t - cum_s) for s <= t, zero above the diagonal
        diff = cum[:, None] - cum[None, :]  # [t, s, D, S]
        causal = np.tril(np.ones((c, c), dtype=bool))[:, :, None, None]
        weights = np.where(causal, np.exp(np.where(causal, diff, 0.0)), 0.0)
        hs = np.exp(cum) * h[None] + np.einsum("tsdn,sdn->tdn", weights, inputs)
        y[sl] = np.einsum("tdn,tn->td", hs, params.C[sl]) + params.D * x[sl]
        h = hs[-1]
    return y


def order_permutation(order: Order | str, T: int, H: int = 1, W: int = 1) -> np.ndarray:
    """Token permutation for ``order``.

    Canonical token index is t*H*W + h*W + w. Entry k of the result is the
    canonical index visited at step k of the scan.
    """
    try:
        order = Order(order)
    except ValueError:
        raise ContractError(f"unknown scan order {order!r}") from None
    grid = np.arange(T * H * W).reshape(T, H, W)
    if order in (Order.ROW_MAJOR, Order.FORWARD):
        return grid.reshape(-1)
    if order is Order.COL_MAJOR:
        return grid.transpose(0, 2, 1).reshape(-1)
    return grid.reshape(-1)[::-1].copy()


def flatten_features(feat: Tensor, order: Order | str) -> tuple[Tensor, np.ndarray]:
    """[T, C, H, W] -> ([T*H*W, C] token sequence in ``order``, inverse permutation)."""
    T, C, H, W = feat.shape
    perm = order_permutation(order, T, H, W)
    tokens = F.transpose(feat, (0, 2, 3, 1)).reshape(T * H * W, C)
    return F.take(tokens, perm, axis=0), np.argsort(perm)


def unflatten_features(seq: Tensor, inverse: np.ndarray, T: int, H: int, W: int) -> Tensor:
    """Inverse of :func:`flatten_features`."""
    C = seq.shape[-1]
    tokens = F.take(seq, inverse, axis=0).reshape(T, H, W, C)
    return F.transpose(tokens, (0, 3, 1, 2))


def reverse_sequence(x):
    """Reverse along the first (sequence) axis."""
    if isinstance(x, Tensor):
        return F.take(x, np.arange(x.shape[0])[::-1].copy(), axis=0)
    return np.asarray(x)[::-1].copy()


def _inverse_softplus(y: np.ndarray) -> np.ndarray:
    return y + np.log(-np.expm1(-y))


class SelectiveSSM(nn.Module):
    """Input-dependent SSM layer on a [L, D] sequence.

    B(t), C(t) and a low-rank step-size code come from one projection of the
    current token; the step size goes through a second projection and softplus.
    A is stored as -exp(log_a).
    """

    def __init__(self, rng: np.random.Generator, d_inner: int, d_state: int = 16, dt_min: float = 0.01, dt_max: float = 0.1):
        self.d_inner = d_inner
        self.d_state = d_state
        self.dt_rank = max(1, math.ceil(d_inner / 16))
        self.x_proj = nn.Linear(rng, d_inner, self.dt_rank + 2 * d_state, bias=False)
        self.dt_proj = nn.Linear(rng, self.dt_rank, d_inner, init_scale=self.dt_rank**-0.5)
        dt = np.exp(rng.uniform(math.log(dt_min), math.log(dt_max), size=d_inner))
        self.dt_proj.bias.data[...] = _inverse_softplus(dt)
        self.log_a = parameter(np.log(np.tile(np.arange(1, d_state + 1, dtype=np.float64), (d_inner, 1))))
        self.skip = parameter(np.ones(d_inner))

    def coefficients(self, u: Tensor):
        proj = self.x_proj(u)
        r, s = self.dt_rank, self.d_state
        delta = F.softplus(self.dt_proj(proj[:, :r]))
        B = proj[:, r : r + s]
        C = proj[:, r + s :]
        A = -F.exp(self.log_a)
        return A, B, C, delta

    def forward(self, u: Tensor) -> Tensor:
        A, B, C, delta = self.coefficients(u)
        return F.selective_scan(u, delta, A, B, C, self.skip)

    def params_for(self, u: Tensor) -> SsmParams:
        A, B, C, delta = self.coefficients(u)
        return SsmParams(A=A.data, B=B.data, C=C.data, delta=delta.data, D=self.skip.data.copy())
