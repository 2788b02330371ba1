"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError, GradCheckError
from .tensor import Tape, Tensor


def finite_difference_check(fn, params, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` evaluates the scalar objective from the current values of
    ``params`` (a sequence of leaf tensors). Values are perturbed in place and
    restored. The relative error of one element is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    params = list(params)
    for p in params:
        p.grad = None
    with Tape() as tape:
        out = fn()
        if out.data.size != 1:
            raise ContractError(f"objective must be scalar, got shape {out.shape}")
        if not np.isfinite(out.data).all():
            raise GradCheckError("objective is not finite at the base point")
        tape.backward(out)
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]

    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.ravel()
        flat_grad = grad.ravel()
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = float(fn().data.reshape(()))
            flat[i] = saved - eps
            f_minus = float(fn().data.reshape(()))
            flat[i] = saved
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise GradCheckError(f"objective not finite near parameter element {i}")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = flat_grad[i]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst
