"""Bias-corrected Adam over named parameter dicts."""
from __future__ import annotations

import numpy as np

from .engine import DiffTensor


class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    def __init__(self, params: dict[str, DiffTensor], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.values) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in params.items()}


def adam_step(params: dict[str, DiffTensor], state: AdamState,
              grads: dict[str, np.ndarray] | None = None) -> None:
    """One Adam update, in place.  Uses ``p.grad`` when ``grads`` is None.

    A missing gradient counts as zero (the parameter is left untouched by the
    moment-scaled update but moments still decay).  NaN/Inf gradients abort
    with the offending parameter's name.
    """
    state.t += 1
    t = state.t
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.values)
        else:
            g = np.asarray(g)
            if not np.all(np.isfinite(g)):
                raise ArithmeticError(f"non-finite gradient for parameter '{name}'")
            if g.shape != p.values.shape:
                raise ValueError(
                    f"gradient shape {g.shape} != parameter shape {p.values.shape} for '{name}'"
                )
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.values -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.values.dtype, copy=False)
