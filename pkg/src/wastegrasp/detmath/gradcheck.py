"""Central finite-difference gradient verification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    flagged: bool = False  # evaluated within ``step`` of a non-smooth point

    def passed(self, tol: float) -> bool:
        return self.flagged or self.max_rel_error < tol


def numerical_gradient(f: Callable[[np.ndarray], float], x, step: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return g


def grad_check(f: Callable[[np.ndarray], float], grad_f: Callable[[np.ndarray], np.ndarray], x,
               step: float = 1e-5, floor: float = 1e-6,
               nonsmooth: Callable[[np.ndarray, float], bool] | None = None) -> GradCheckResult:
    """Compare ``grad_f(x)`` against central differences of ``f``.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``; the floor
    keeps entries whose true gradient is ~0 from dividing finite-difference
    noise by nothing.  If ``nonsmooth(x, step)`` says the stencil straddles a
    kink the result is flagged instead of being counted as a failure.
    """
    x = np.array(x, dtype=float)
    analytic = np.asarray(grad_f(x), dtype=float)
    numeric = numerical_gradient(f, x, step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    err = float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0
    flagged = bool(nonsmooth(x, step)) if nonsmooth is not None else False
    return GradCheckResult(err, flagged)
