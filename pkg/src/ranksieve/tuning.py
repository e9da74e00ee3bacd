"""Regularization parameters that need no cross-validation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .exceptions import InvalidArgumentError

__all__ = ["LambdaSpec", "rank_lambda", "sqrt_lasso_lambda", "LAMBDA_FLOOR"]

LAMBDA_FLOOR = 1e-12

# cap on the number of entries of the (draws x p) score block held at once
_BLOCK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class LambdaSpec:
    """Monte Carlo settings for :func:`rank_lambda`."""

    c: float = 1.1
    alpha0: float = 0.10
    draws: int = 1000
    seed: int | None = 0

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidArgumentError("c must be positive")
        if not 0 < self.alpha0 < 1:
            raise InvalidArgumentError("alpha0 must lie in (0, 1)")
        if self.draws < 100:
            raise InvalidArgumentError("draws must be at least 100")


def _score_sup_norms(X: np.ndarray, draws: int, rng: np.random.Generator) -> np.ndarray:
    n, p = X.shape
    base = np.arange(1, n + 1, dtype=float)
    scale = -2.0 / (n * (n - 1.0))
    chunk = max(1, min(draws, _BLOCK_ENTRIES // max(p, n)))
    out = np.empty(draws)
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        r = rng.permuted(np.broadcast_to(base, (m, n)), axis=1)
        xi = 2.0 * r - (n + 1.0)
        out[done:done + m] = np.max(np.abs(scale * (xi @ X)), axis=1)
        done += m
    return out


def rank_lambda(X: np.ndarray, spec: LambdaSpec | None = None) -> float:
    """``c`` times the ``(1 - alpha0)``-quantile of ``||S_n||_inf`` under random ranks.

    ``S_n = -2/(n(n-1)) X^T xi`` with ``xi = 2r - (n+1)`` and ``r`` a uniform
    random permutation of ``1..n``. The quantile is the nearest-rank one over
    ``spec.draws`` simulated permutations, so the result is deterministic for a
    fixed seed. A zero design gives the floor ``1e-12``.
    """
    spec = spec or LambdaSpec()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidArgumentError("X must be 2-D with at least two rows")
    rng = np.random.default_rng(spec.seed)
    norms = np.sort(_score_sup_norms(X, spec.draws, rng))
    k = math.ceil((1.0 - spec.alpha0) * spec.draws) - 1
    lam = spec.c * float(norms[min(max(k, 0), spec.draws - 1)])
    return max(lam, LAMBDA_FLOOR)


def sqrt_lasso_lambda(n: int, c: float = 1.1, level: float = 0.05) -> float:
    """``c * Phi^{-1}(1 - level/(2n))``, the usual square-root lasso choice."""
    if n < 1:
        raise InvalidArgumentError("n must be at least 1")
    # evaluate the lower tail to avoid cancellation in 1 - level/(2n)
    return -c * NormalDist().inv_cdf(level / (2.0 * n))
