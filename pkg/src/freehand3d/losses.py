"""Supervised, alignment and angle-prior losses."""

from __future__ import annotations

import logging

import numpy as np

from .autodiff import ContractError, Tensor, as_tensor
from .autodiff import functional as F

log = logging.getLogger(__name__)

PEARSON_EPS = 1e-8


def pearson_with_flag(x, y, eps: float = PEARSON_EPS) -> tuple[Tensor, bool]:
    """Correlation of two equal-length vectors, plus a degenerate-variance flag.

    Inputs of any shape are flattened row-major. When either standard deviation
    is at most ``eps`` the correlation is defined as 0 and the flag is set.
    """
    x = as_tensor(x).reshape(-1)
    y = as_tensor(y).reshape(-1)
    if x.shape != y.shape:
        raise ContractError(f"pearson: lengths differ ({x.shape[0]} vs {y.shape[0]})")
    if x.shape[0] < 2:
        raise ContractError("pearson: need at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    if xc.data.std() <= eps or yc.data.std() <= eps:
        log.debug("pearson: degenerate variance, returning 0")
        return Tensor(0.0), True
    r = (xc * yc).sum() / ((xc * xc).sum() * (yc * yc).sum()).sqrt()
    return r, False


def pearson(x, y, eps: float = PEARSON_EPS) -> Tensor:
    return pearson_with_flag(x, y, eps)[0]


def pearson_loss(pred, target, per_axis: bool = False) -> Tensor:
    """1 - r over the row-major flattened matrix, or averaged per column."""
    if not per_axis:
        return 1.0 - pearson(pred, target)
    pred, target = as_tensor(pred), as_tensor(target)
    cols = [1.0 - pearson(pred[:, c], target[:, c]) for c in range(pred.shape[1])]
    total = cols[0]
    for c in cols[1:]:
        total = total + c
    return total / len(cols)


def loss_sup(pred, target, per_axis: bool = False) -> Tensor:
    """Mean absolute error plus Pearson correlation loss on [K, 6] pose parameters."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ContractError(f"loss_sup: shapes {pred.shape} and {target.shape} differ")
    if pred.shape[0] < 2:
        raise ContractError("loss_sup: need at least two transitions")
    return (pred - target).abs().mean() + pearson_loss(pred, target, per_axis)


def _row_normalize(x: Tensor) -> Tensor:
    return x / ((x * x).sum(axis=1, keepdims=True) + 1e-12).sqrt()


def loss_align(image_feat, acc_feat, tau: float = 0.1, normalize: bool = False) -> Tensor:
    """InfoNCE over transitions: matched (F_I[i], F_A[i]) pairs are positives."""
    if tau <= 0:
        raise ContractError("temperature must be positive")
    fi, fa = as_tensor(image_feat), as_tensor(acc_feat)
    if fi.shape != fa.shape or fi.ndim != 2:
        raise ContractError(f"loss_align: need equal [K, d] inputs, got {fi.shape} and {fa.shape}")
    K = fi.shape[0]
    if K < 2:
        raise ContractError("loss_align: need at least two transitions")
    if normalize:
        fi, fa = _row_normalize(fi), _row_normalize(fa)
    logits = F.matmul(fi, fa.T) / tau
    return -(F.log_softmax(logits, axis=1) * np.eye(K)).sum() / K


def weighted_mean_angle(weights, angles) -> Tensor:
    """Per-transition average of IMU angles under the fusion weights: [M,K],[M,K,3] -> [K,3]."""
    w, a = as_tensor(weights), as_tensor(angles)
    M, K = w.shape
    if a.shape != (M, K, 3):
        raise ContractError(f"weighted_mean_angle: angles {a.shape} do not match weights {w.shape}")
    return (w.reshape(M, K, 1) * a).sum(axis=0)


def loss_prior(pred_angles, mean_angles, per_axis: bool = False) -> Tensor:
    """1 - Pearson(predicted Euler angles, fused IMU angles)."""
    pred_angles, mean_angles = as_tensor(pred_angles), as_tensor(mean_angles)
    if pred_angles.shape != mean_angles.shape:
        raise ContractError(f"loss_prior: shapes {pred_angles.shape} and {mean_angles.shape} differ")
    if pred_angles.shape[0] < 2:
        raise ContractError("loss_prior: need at least two transitions")
    return pearson_loss(pred_angles, mean_angles, per_axis)
