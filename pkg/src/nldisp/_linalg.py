"""Power iteration with Collatz-Wielandt bounds for positive matrices/operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PerronResult:
    lam_lo: float          # Collatz-Wielandt lower bound min (Mv)/v
    lam_hi: float          # upper bound max (Mv)/v
    vector: np.ndarray     # positive, sup-norm 1
    iterations: int
    converged: bool

    @property
    def value(self):
        return 0.5 * (self.lam_lo + self.lam_hi)

    @property
    def gap(self):
        return self.lam_hi - self.lam_lo


def power_perron(apply_fn, n, tol=1e-10, max_iter=100000, v0=None) -> PerronResult:
    """Perron eigenpair of a positivity-preserving map given by apply_fn.

    apply_fn must map strictly positive vectors to strictly positive vectors
    (nonnegative irreducible matrix action). The Collatz-Wielandt ratios
    min/max of (Mv)/v sandwich the Perron value at every iterate; iteration
    stops when the gap falls below tol * max(1, |value|).
    """
    v = np.ones(n) if v0 is None else np.asarray(v0, dtype=float).copy()
    if np.any(v <= 0):
        raise ValueError("power iteration needs a strictly positive start vector")
    v /= np.max(v)
    lo, hi = -np.inf, np.inf
    for it in range(1, max_iter + 1):
        w = apply_fn(v)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("power iteration produced non-finite values")
        if np.any(w <= 0):
            raise FloatingPointError("power iteration lost positivity")
        ratios = w / v
        lo, hi = float(np.min(ratios)), float(np.max(ratios))
        v = w / np.max(w)
        if hi - lo <= tol * max(1.0, abs(hi)):
            return PerronResult(lam_lo=lo, lam_hi=hi, vector=v, iterations=it,
                                converged=True)
    return PerronResult(lam_lo=lo, lam_hi=hi, vector=v, iterations=max_iter,
                        converged=False)


def power_perron_matrix(M, tol=1e-10, max_iter=100000, v0=None) -> PerronResult:
    M = np.asarray(M, dtype=float)
    return power_perron(lambda v: M @ v, M.shape[0], tol=tol, max_iter=max_iter, v0=v0)
