"""Finite-difference verification of analytic gradients.

Central differences in double precision, default step 1e-5, relative error
|analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import DiffTensor, Tape, backward, zero_grads


@dataclass
class GradCheckReport:
    per_param: dict[str, float] = field(default_factory=dict)
    worst_param: str = ""
    max_rel_error: float = 0.0

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error <= tolerance


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(fn: Callable[[], DiffTensor], params: dict[str, DiffTensor],
               tolerance: float = 1e-4, step: float = 1e-5,
               max_coords_per_param: int = 16, rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients of a scalar ``fn()`` against central differences.

    ``fn`` must be deterministic (it is evaluated twice up front and must
    agree bitwise) and must read the *current* values of ``params``.  For
    parameters with more coordinates than ``max_coords_per_param``, a random
    subset is probed.
    """
    rng = rng or np.random.default_rng(0)
    f0 = float(fn().values)
    f1 = float(fn().values)
    if f0 != f1:
        raise RuntimeError(f"grad_check requires a deterministic function ({f0!r} != {f1!r})")

    zero_grads(params)
    with Tape() as tape:
        loss = fn()
    backward(tape, loss)

    report = GradCheckReport()
    for name, p in params.items():
        n_coords = p.values.size
        if n_coords <= max_coords_per_param:
            coords = np.arange(n_coords)
        else:
            coords = rng.choice(n_coords, size=max_coords_per_param, replace=False)
        flat = p.values.reshape(-1)
        analytic_flat = (np.zeros_like(flat) if p.grad is None else p.grad.reshape(-1))
        worst = 0.0
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + step
            f_plus = float(fn().values)
            flat[idx] = orig - step
            f_minus = float(fn().values)
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            worst = max(worst, _rel_err(float(analytic_flat[idx]), numeric))
        report.per_param[name] = worst
        if worst >= report.max_rel_error:
            report.max_rel_error = worst
            report.worst_param = name
    return report
