"""Primitive registry: each entry pairs a numpy forward with its vector-Jacobian product.

Forward functions take a list of input arrays plus an attribute dict and return
``(output, ctx)``; backward functions take ``(ctx, grad_out, inputs, attrs)`` and
return one gradient (or ``None``) per input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import scan_kernels
from .tensor import ShapeError

PRIMITIVES: dict[str, "Primitive"] = {}

LAYER_NORM_EPS = 1e-5


@dataclass(frozen=True)
class Primitive:
    kind: str
    forward: Callable
    backward: Callable


def register(kind: str):
    def wrap(cls):
        PRIMITIVES[kind] = Primitive(kind, cls.forward, cls.backward)
        return cls

    return wrap


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(kind: str, a: np.ndarray, b: np.ndarray) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise binary ----------------------------------------------------


@register("add")
class _Add:
    @staticmethod
    def forward(xs, attrs):
        a, b = xs
        _broadcast_shape("add", a, b)
        return a + b, None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return _unbroadcast(g, xs[0].shape), _unbroadcast(g, xs[1].shape)


@register("sub")
class _Sub:
    @staticmethod
    def forward(xs, attrs):
        a, b = xs
        _broadcast_shape("sub", a, b)
        return a - b, None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return _unbroadcast(g, xs[0].shape), _unbroadcast(-g, xs[1].shape)


@register("mul")
class _Mul:
    @staticmethod
    def forward(xs, attrs):
        a, b = xs
        _broadcast_shape("mul", a, b)
        return a * b, None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        a, b = xs
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


@register("div")
class _Div:
    @staticmethod
    def forward(xs, attrs):
        a, b = xs
        _broadcast_shape("div", a, b)
        return a / b, None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        a, b = xs
        return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)


# -- elementwise unary -----------------------------------------------------


@register("neg")
class _Neg:
    @staticmethod
    def forward(xs, attrs):
        return -xs[0], None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (-g,)


@register("exp")
class _Exp:
    @staticmethod
    def forward(xs, attrs):
        out = np.exp(xs[0])
        return out, out

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (g * ctx,)


@register("log")
class _Log:
    @staticmethod
    def forward(xs, attrs):
        return np.log(xs[0]), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (g / xs[0],)


@register("sqrt")
class _Sqrt:
    @staticmethod
    def forward(xs, attrs):
        out = np.sqrt(xs[0])
        return out, out

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (g * 0.5 / ctx,)


@register("abs")
class _Abs:
    @staticmethod
    def forward(xs, attrs):
        return np.abs(xs[0]), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (g * np.sign(xs[0]),)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@register("sigmoid")
class _Sigmoid:
    @staticmethod
    def forward(xs, attrs):
        s = _sigmoid(xs[0])
        return s, s

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (g * ctx * (1.0 - ctx),)


@register("silu")
class _Silu:
    @staticmethod
    def forward(xs, attrs):
        s = _sigmoid(xs[0])
        return xs[0] * s, s

    @staticmethod
    def backward(ctx, g, xs, attrs):
        s = ctx
        return (g * (s + xs[0] * s * (1.0 - s)),)


@register("softplus")
class _Softplus:
    @staticmethod
    def forward(xs, attrs):
        x = xs[0]
        return np.logaddexp(0.0, x), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (g * _sigmoid(xs[0]),)


@register("relu")
class _Relu:
    @staticmethod
    def forward(xs, attrs):
        return np.maximum(xs[0], 0.0), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (g * (xs[0] > 0),)


# -- linear algebra --------------------------------------------------------


@register("matmul")
class _Matmul:
    @staticmethod
    def forward(xs, attrs):
        a, b = xs
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul: operands need rank >= 2, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(
                f"matmul: contraction axes differ (a axis -1 = {a.shape[-1]}, b axis -2 = {b.shape[-2]})"
            )
        return a @ b, None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        a, b = xs
        ga = g @ np.swapaxes(b, -1, -2)
        gb = np.swapaxes(a, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


@register("linear")
class _Linear:
    """y = x W^T + b with W of shape [out, in]."""

    @staticmethod
    def forward(xs, attrs):
        x, w = xs[0], xs[1]
        if w.ndim != 2 or x.shape[-1] != w.shape[1]:
            raise ShapeError(f"linear: input axis -1 = {x.shape[-1]} but weight is {w.shape}")
        out = x @ w.T
        if len(xs) == 3:
            if xs[2].shape != (w.shape[0],):
                raise ShapeError(f"linear: bias shape {xs[2].shape} != ({w.shape[0]},)")
            out = out + xs[2]
        return out, None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        x, w = xs[0], xs[1]
        gx = g @ w
        g2 = g.reshape(-1, g.shape[-1])
        gw = g2.T @ x.reshape(-1, x.shape[-1])
        grads = [gx, gw]
        if len(xs) == 3:
            grads.append(g2.sum(axis=0))
        return tuple(grads)


# -- convolutions ----------------------------------------------------------


@register("conv1d_depthwise")
class _Conv1dDepthwise:
    """Causal depthwise conv over a [L, D] sequence; kernel [D, K], bias [D]."""

    @staticmethod
    def forward(xs, attrs):
        x, w, b = xs
        if x.ndim != 2 or w.ndim != 2 or w.shape[0] != x.shape[1] or b.shape != (x.shape[1],):
            raise ShapeError(
                f"conv1d_depthwise: channel axis mismatch (x {x.shape}, kernel {w.shape}, bias {b.shape})"
            )
        L, _ = x.shape
        K = w.shape[1]
        xp = np.concatenate([np.zeros((K - 1, x.shape[1])), x], axis=0)
        out = np.broadcast_to(b, x.shape).copy()
        for k in range(K):
            out += w[:, k] * xp[k : k + L]
        return out, xp

    @staticmethod
    def backward(ctx, g, xs, attrs):
        x, w, b = xs
        xp = ctx
        L = x.shape[0]
        K = w.shape[1]
        gxp = np.zeros_like(xp)
        gw = np.empty_like(w)
        for k in range(K):
            gxp[k : k + L] += g * w[:, k]
            gw[:, k] = (g * xp[k : k + L]).sum(axis=0)
        return gxp[K - 1 :], gw, g.sum(axis=0)


@register("conv2d")
class _Conv2d:
    """x [N, Cin, H, W], weight [Cout, Cin, k, k], bias [Cout]; attrs stride, padding."""

    @staticmethod
    def forward(xs, attrs):
        x, w = xs[0], xs[1]
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"conv2d: input channels (axis 1) {x.shape} vs weight {w.shape}")
        s = attrs.get("stride", 1)
        p = attrs.get("padding", 0)
        k = w.shape[2]
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo = win.shape[:4]
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv2d: spatial axes {x.shape[2:]} too small for kernel {k}")
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        out = cols @ w.reshape(w.shape[0], -1).T
        if len(xs) == 3:
            out = out + xs[2]
        out = out.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(out), (cols, xp.shape, ho, wo)

    @staticmethod
    def backward(ctx, g, xs, attrs):
        x, w = xs[0], xs[1]
        cols, xp_shape, ho, wo = ctx
        s = attrs.get("stride", 1)
        p = attrs.get("padding", 0)
        cout, cin, k, _ = w.shape
        n = x.shape[0]
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gw = (g2.T @ cols).reshape(w.shape)
        gcols = (g2 @ w.reshape(cout, -1)).reshape(n, ho, wo, cin, k, k)
        gxp = np.zeros(xp_shape)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, p : p + x.shape[2], p : p + x.shape[3]] if p else gxp
        grads = [gx, gw]
        if len(xs) == 3:
            grads.append(g2.sum(axis=0))
        return tuple(grads)


# -- normalisation / softmax -----------------------------------------------


@register("layer_norm")
class _LayerNorm:
    """Normalise over the last axis; inputs (x, gamma, beta)."""

    @staticmethod
    def forward(xs, attrs):
        x, gamma, beta = xs
        d = x.shape[-1]
        if gamma.shape != (d,) or beta.shape != (d,):
            raise ShapeError(f"layer_norm: axis -1 = {d} but gamma {gamma.shape}, beta {beta.shape}")
        eps = attrs.get("eps", LAYER_NORM_EPS)
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        return xhat * gamma + beta, (xhat, inv)

    @staticmethod
    def backward(ctx, g, xs, attrs):
        x, gamma, beta = xs
        xhat, inv = ctx
        gxhat = g * gamma
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, g.shape[-1])
        return gx, (flat * xhat.reshape(flat.shape)).sum(axis=0), flat.sum(axis=0)


@register("softmax")
class _Softmax:
    @staticmethod
    def forward(xs, attrs):
        ax = attrs.get("axis", -1)
        z = xs[0] - xs[0].max(axis=ax, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=ax, keepdims=True)
        return out, out

    @staticmethod
    def backward(ctx, g, xs, attrs):
        ax = attrs.get("axis", -1)
        y = ctx
        return (y * (g - (g * y).sum(axis=ax, keepdims=True)),)


@register("log_softmax")
class _LogSoftmax:
    @staticmethod
    def forward(xs, attrs):
        ax = attrs.get("axis", -1)
        z = xs[0] - xs[0].max(axis=ax, keepdims=True)
        out = z - np.log(np.exp(z).sum(axis=ax, keepdims=True))
        return out, out

    @staticmethod
    def backward(ctx, g, xs, attrs):
        ax = attrs.get("axis", -1)
        return (g - np.exp(ctx) * g.sum(axis=ax, keepdims=True),)


# -- reductions / pooling ---------------------------------------------------


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(shape)) if g.ndim else g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    if not keepdims:
        for a in sorted(axes):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


@register("sum")
class _Sum:
    @staticmethod
    def forward(xs, attrs):
        return np.asarray(xs[0].sum(axis=attrs.get("axis"), keepdims=attrs.get("keepdims", False))), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (_expand_reduced(g, xs[0].shape, attrs.get("axis"), attrs.get("keepdims", False)).copy(),)


@register("mean")
class _Mean:
    @staticmethod
    def forward(xs, attrs):
        return np.asarray(xs[0].mean(axis=attrs.get("axis"), keepdims=attrs.get("keepdims", False))), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        x = xs[0]
        axis = attrs.get("axis")
        count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
        return (_expand_reduced(g, x.shape, axis, attrs.get("keepdims", False)) / count,)


@register("avg_pool")
class _AvgPool:
    """Mean over non-overlapping k x k windows of the last two axes; ragged edges are dropped."""

    @staticmethod
    def forward(xs, attrs):
        x = xs[0]
        if x.ndim < 2:
            raise ShapeError(f"avg_pool: need rank >= 2, got {x.shape}")
        kh, kw = attrs["kernel"]
        h, w = x.shape[-2] // kh, x.shape[-1] // kw
        if h < 1 or w < 1:
            raise ShapeError(f"avg_pool: spatial axes {x.shape[-2:]} smaller than kernel {(kh, kw)}")
        xt = x[..., : h * kh, : w * kw].reshape(x.shape[:-2] + (h, kh, w, kw))
        return xt.mean(axis=(-3, -1)), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        x = xs[0]
        kh, kw = attrs["kernel"]
        h, w = g.shape[-2:]
        gx = np.zeros_like(x)
        gx[..., : h * kh, : w * kw] = np.repeat(np.repeat(g, kh, axis=-2), kw, axis=-1) / (kh * kw)
        return (gx,)


# -- structural --------------------------------------------------------------


@register("concat")
class _Concat:
    @staticmethod
    def forward(xs, attrs):
        ax = attrs.get("axis", 0)
        ref = xs[0].shape
        for x in xs[1:]:
            if x.ndim != len(ref) or any(a != b for i, (a, b) in enumerate(zip(ref, x.shape)) if i != ax % len(ref)):
                raise ShapeError(f"concat: shapes {ref} and {x.shape} differ off axis {ax}")
        return np.concatenate(xs, axis=ax), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        ax = attrs.get("axis", 0)
        cuts = np.cumsum([x.shape[ax] for x in xs])[:-1]
        return tuple(np.split(g, cuts, axis=ax))


@register("slice")
class _Slice:
    @staticmethod
    def forward(xs, attrs):
        try:
            return np.ascontiguousarray(xs[0][attrs["index"]]), None
        except IndexError as exc:
            raise ShapeError(f"slice: {exc} for shape {xs[0].shape}") from None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        gx = np.zeros_like(xs[0])
        index = attrs["index"]
        parts = index if isinstance(index, tuple) else (index,)
        if any(isinstance(p, (list, np.ndarray)) for p in parts):
            np.add.at(gx, index, g)
        else:
            gx[index] += g
        return (gx,)


@register("take")
class _Take:
    """Gather along one axis by an integer index array (permutations, reversal)."""

    @staticmethod
    def forward(xs, attrs):
        idx = attrs["indices"]
        ax = attrs.get("axis", 0)
        if len(idx) and (idx.max() >= xs[0].shape[ax] or idx.min() < -xs[0].shape[ax]):
            raise ShapeError(f"take: index out of range for axis {ax} of size {xs[0].shape[ax]}")
        return np.take(xs[0], idx, axis=ax), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        idx = attrs["indices"]
        ax = attrs.get("axis", 0)
        gx = np.zeros_like(xs[0])
        gm = np.moveaxis(gx, ax, 0)
        np.add.at(gm, idx, np.moveaxis(g, ax, 0))
        return (gx,)


@register("reshape")
class _Reshape:
    @staticmethod
    def forward(xs, attrs):
        try:
            return xs[0].reshape(attrs["shape"]), None
        except ValueError:
            raise ShapeError(f"reshape: cannot view {xs[0].shape} as {attrs['shape']}") from None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        return (g.reshape(xs[0].shape),)


@register("transpose")
class _Transpose:
    @staticmethod
    def forward(xs, attrs):
        axes = attrs.get("axes")
        if axes is not None and sorted(axes) != list(range(xs[0].ndim)):
            raise ShapeError(f"transpose: axes {axes} do not permute rank {xs[0].ndim}")
        return np.ascontiguousarray(np.transpose(xs[0], axes)), None

    @staticmethod
    def backward(ctx, g, xs, attrs):
        axes = attrs.get("axes")
        inv = None if axes is None else np.argsort(axes)
        return (np.transpose(g, inv),)


# -- selective scan ------------------------------------------------------------


@register("selective_scan")
class _SelectiveScan:
    """Diagonal selective SSM over one sequence.

    Inputs ``(u [L,D], delta [L,D], A [D,S], B [L,S], C [L,S], Dskip [D])``:
    h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t, y_t = C_t . h_t + Dskip u_t.
    """

    @staticmethod
    def forward(xs, attrs):
        u, delta, A, B, C, Dskip = xs
        L, D = u.shape
        S = A.shape[1]
        if delta.shape != (L, D) or A.shape != (D, S) or B.shape != (L, S) or C.shape != (L, S) or Dskip.shape != (D,):
            raise ShapeError(
                "selective_scan: expected u/delta [L,D], A [D,S], B/C [L,S], D [D]; got "
                f"{u.shape}, {delta.shape}, {A.shape}, {B.shape}, {C.shape}, {Dskip.shape}"
            )
        y, hs = scan_kernels.scan_forward(u, delta, A, B, C, Dskip)
        return y, hs

    @staticmethod
    def backward(ctx, g, xs, attrs):
        u, delta, A, B, C, Dskip = xs
        return scan_kernels.scan_backward(np.ascontiguousarray(g), u, delta, A, B, C, Dskip, ctx)
