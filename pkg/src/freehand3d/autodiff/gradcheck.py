from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward


class GradCheckError(AssertionError):
    pass


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``f`` is evaluated as ``f(x)``; ``x`` is perturbed in place, so closures over
    module parameters work as well as pure functions of ``x``.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    was = x.requires_grad
    x.requires_grad = True
    x.grad = None
    out = f(x)
    if not np.isfinite(out.data).all():
        raise GradCheckError("non-finite output at the base point")
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None
    x.requires_grad = was

    flat = x.data.reshape(-1)
    numeric = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x).item()
        flat[i] = orig - eps
        fm = f(x).item()
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise GradCheckError(f"non-finite output when perturbing coordinate {i}")
        numeric[i] = (fp - fm) / (2.0 * eps)
    a = analytic.reshape(-1)
    return float(np.max(np.abs(a - numeric) / np.maximum(1.0, np.abs(a)))) if a.size else 0.0
