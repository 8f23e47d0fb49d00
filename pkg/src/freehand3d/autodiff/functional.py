"""Thin wrappers so model code reads as ordinary function calls."""

from __future__ import annotations

import numpy as np

from .primitives import LAYER_NORM_EPS
from .tensor import Tensor, apply_primitive


def add(a, b) -> Tensor:
    return apply_primitive("add", [a, b])


def mul(a, b) -> Tensor:
    return apply_primitive("mul", [a, b])


def matmul(a, b) -> Tensor:
    return apply_primitive("matmul", [a, b])


def linear(x, weight, bias=None) -> Tensor:
    inputs = [x, weight] if bias is None else [x, weight, bias]
    return apply_primitive("linear", inputs)


def conv1d_depthwise(x, weight, bias) -> Tensor:
    return apply_primitive("conv1d_depthwise", [x, weight, bias])


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    inputs = [x, weight] if bias is None else [x, weight, bias]
    return apply_primitive("conv2d", inputs, {"stride": stride, "padding": padding})


def layer_norm(x, gamma, beta, eps: float = LAYER_NORM_EPS) -> Tensor:
    return apply_primitive("layer_norm", [x, gamma, beta], {"eps": eps})


def silu(x) -> Tensor:
    return apply_primitive("silu", [x])


def sigmoid(x) -> Tensor:
    return apply_primitive("sigmoid", [x])


def softplus(x) -> Tensor:
    return apply_primitive("softplus", [x])


def relu(x) -> Tensor:
    return apply_primitive("relu", [x])


def exp(x) -> Tensor:
    return apply_primitive("exp", [x])


def log(x) -> Tensor:
    return apply_primitive("log", [x])


def neg(x) -> Tensor:
    return apply_primitive("neg", [x])


def softmax(x, axis: int = -1) -> Tensor:
    return apply_primitive("softmax", [x], {"axis": axis})


def log_softmax(x, axis: int = -1) -> Tensor:
    return apply_primitive("log_softmax", [x], {"axis": axis})


def avg_pool(x, kernel) -> Tensor:
    if isinstance(kernel, int):
        kernel = (kernel, kernel)
    return apply_primitive("avg_pool", [x], {"kernel": tuple(kernel)})


def global_avg_pool(x) -> Tensor:
    """[..., H, W] -> [...] by exact spatial mean."""
    return avg_pool(x, x.shape[-2:]).reshape(x.shape[:-2])


def concat(xs, axis: int = 0) -> Tensor:
    return apply_primitive("concat", list(xs), {"axis": axis})


def take(x, indices, axis: int = 0) -> Tensor:
    return apply_primitive("take", [x], {"indices": np.asarray(indices, dtype=np.intp), "axis": axis})


def reshape(x, shape) -> Tensor:
    return apply_primitive("reshape", [x], {"shape": tuple(shape)})


def transpose(x, axes=None) -> Tensor:
    return apply_primitive("transpose", [x], {"axes": None if axes is None else tuple(axes)})


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return apply_primitive("sum", [x], {"axis": axis, "keepdims": keepdims})


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    return apply_primitive("mean", [x], {"axis": axis, "keepdims": keepdims})


def selective_scan(u, delta, A, B, C, D) -> Tensor:
    return apply_primitive("selective_scan", [u, delta, A, B, C, D])
