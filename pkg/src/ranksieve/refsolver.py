"""Reference solvers used as independent oracles.

``splitting_solve`` is a plain alternating-direction method of multipliers on
``min h(u) + lam ||z||_1`` subject to ``u = b - Ax`` and ``z = x``. It shares
only the prox maps with the Newton-based path. ``enumerate_prox_oracle``
computes the Wilcoxon prox by brute force over pool partitions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, cho_solve

from .exceptions import InvalidArgumentError
from .model import Loss, ProblemData, loss_value, objective
from .prox import wilcoxon_shift

__all__ = ["SplittingResult", "splitting_solve", "enumerate_prox_oracle"]


@dataclass
class SplittingResult:
    x: np.ndarray
    val: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    beta: float
    alpha: np.ndarray | None = None
    objectives: list = field(default_factory=list)


class _NormalSolver:
    """Applies ``(A^T A + I)^{-1}`` through a factorization computed once.

    Tall problems keep the explicit ``p x p`` inverse. Wide problems use
    Woodbury, ``I - A^T (I + A A^T)^{-1} A``, with an explicit ``n x n``
    inverse, so the jitted loop only needs matrix-vector products.
    """

    def __init__(self, A: np.ndarray):
        n, p = A.shape
        self.wide = p > n
        if self.wide:
            K = np.eye(n) + A @ A.T
            self.inv = cho_solve(cho_factor(K), np.eye(n))
        else:
            self.inv = cho_solve(cho_factor(np.eye(p) + A.T @ A), np.eye(p))


@njit(cache=True)
def _pava_desc(v, out):
    # pool-adjacent-violators for the nonincreasing projection, written
    # separately from the one in ``prox`` so the oracle stays independent
    n = v.shape[0]
    sums = np.empty(n)
    cnts = np.empty(n)
    top = 0
    for i in range(n):
        sums[top] = v[i]
        cnts[top] = 1.0
        top += 1
        while top > 1 and sums[top - 2] * cnts[top - 1] <= sums[top - 1] * cnts[top - 2]:
            sums[top - 2] += sums[top - 1]
            cnts[top - 2] += cnts[top - 1]
            top -= 1
    k = 0
    for j in range(top):
        m = sums[j] / cnts[j]
        for _ in range(int(cnts[j])):
            out[k] = m
            k += 1


@njit(cache=True)
def _prox_h(y, tau, rank, out, buf, buf2):
    n = y.shape[0]
    if rank:
        perm = np.argsort(-y, kind="mergesort")
        c = 2.0 * tau / (n * (n - 1.0))
        for k in range(n):
            buf[k] = y[perm[k]] - c * (n - 2.0 * (k + 1) + 1.0)
        _pava_desc(buf, buf2)
        for k in range(n):
            out[perm[k]] = buf2[k]
    else:
        nrm = np.sqrt(np.sum(y * y))
        f = 1.0 - tau / nrm if nrm > tau else 0.0
        for k in range(n):
            out[k] = f * y[k]


@njit(cache=True)
def _admm_run(A, b, lam, rank, wide, inv, x, z, u, w1, w2, beta, relax,
              tol, iters, balance_every, it0):
    n, p = A.shape
    r_norm = np.inf
    s_norm = np.inf
    buf = np.empty(n)
    buf2 = np.empty(n)
    unew = np.empty(n)
    it = it0
    done = False
    for _ in range(iters):
        it += 1
        rhs = A.T @ (b - u - w1) + z + w2
        if wide:
            x[:] = rhs - A.T @ (inv @ (A @ rhs))
        else:
            x[:] = inv @ rhs
        Ax = A @ x
        bAx = relax * (b - Ax) + (1.0 - relax) * u
        xr = relax * x + (1.0 - relax) * z
        _prox_h(bAx - w1, 1.0 / beta, rank, unew, buf, buf2)
        t = lam / beta
        znew = np.sign(xr - w2) * np.maximum(np.abs(xr - w2) - t, 0.0)
        du = unew - u
        dz = znew - z
        u[:] = unew
        z[:] = znew
        w1 += u - bAx
        w2 += z - xr
        r1 = Ax + u - b
        r2 = z - x
        r_norm = np.sqrt(np.sum(r1 * r1) + np.sum(r2 * r2))
        sv = A.T @ du - dz
        s_norm = beta * np.sqrt(np.sum(sv * sv))
        if r_norm + s_norm <= tol:
            done = True
            break
        if balance_every > 0 and it % balance_every == 0:
            if r_norm > 10.0 * s_norm:
                beta *= 2.0
                w1 /= 2.0
                w2 /= 2.0
            elif s_norm > 10.0 * r_norm:
                beta /= 2.0
                w1 *= 2.0
                w2 *= 2.0
    return it, beta, r_norm, s_norm, done


def splitting_solve(
    data: ProblemData,
    tol: float = 1e-8,
    max_iter: int = 1000000,
    beta: float = 1.0,
    balance_every: int | None = None,
    relax: float = 1.0,
    log_every: int = 0,
) -> SplittingResult:
    """ADMM for ``min h(b - Ax) + lam ||x||_1``.

    Iterates in scaled form: an ``x`` step from the regularized normal
    equations ``(A^T A + I) x = rhs`` (the matrix does not depend on the
    penalty, so it is factored once), closed-form prox steps for ``u`` and
    ``z``, then dual ascent. The penalty starts at ``beta`` and is rebalanced
    every ``balance_every`` iterations when primal and dual residuals differ
    by more than 10x. ``relax`` in ``(0, 2)`` over-relaxes the ``x`` step.
    Stops once ``primal + dual <= tol``.

    The returned ``x`` is the ``z`` iterate, which carries exact zeros, and
    ``alpha = -beta * w1`` is the loss multiplier (``alpha`` in the
    subdifferential of ``h`` at ``u``).
    ``converged`` is False when ``max_iter`` ran out; the last iterate is
    returned anyway. With ``log_every > 0`` the objective at ``z`` is
    recorded every ``log_every`` iterations.
    """
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    if not 0 < relax < 2:
        raise InvalidArgumentError("relax must lie in (0, 2)")
    if max_iter < 1:
        raise InvalidArgumentError("max_iter must be positive")
    rank = data.loss is Loss.WILCOXON
    if balance_every is None:
        # rebalancing the penalty keeps disturbing the polyhedral rank problem
        balance_every = 0 if rank else 100
    A = np.ascontiguousarray(data.A)
    b = np.array(data.b)
    n, p = A.shape
    normal = _NormalSolver(A)
    x = np.zeros(p)
    z = np.zeros(p)
    u = b.copy()
    w1 = np.zeros(n)
    w2 = np.zeros(p)
    objectives: list = []
    chunk = log_every if log_every > 0 else max_iter
    it = 0
    converged = False
    r_norm = s_norm = np.inf
    while it < max_iter and not converged:
        step = min(chunk, max_iter - it)
        it, beta, r_norm, s_norm, converged = _admm_run(
            A, b, data.lam, rank, normal.wide, normal.inv, x, z, u, w1, w2,
            float(beta), float(relax), float(tol), step, balance_every, it,
        )
        if log_every > 0:
            objectives.append(objective(data, z))
    return SplittingResult(
        x=z.copy(), val=objective(data, z), primal_residual=float(r_norm),
        dual_residual=float(s_norm), iterations=int(it), converged=bool(converged),
        beta=float(beta), alpha=-beta * w1, objectives=objectives,
    )


def _project_by_enumeration(v: np.ndarray) -> np.ndarray:
    """Projection of ``v`` onto nonincreasing vectors by trying every contiguous partition."""
    n = v.shape[0]
    scale = 1.0 + float(np.max(np.abs(v)))
    tol = 1e-12 * scale
    for cuts in itertools.product((False, True), repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        means = [float(np.mean(v[a:c])) for a, c in zip(bounds[:-1], bounds[1:])]
        # pooled values must be nonincreasing
        if any(m2 > m1 + tol for m1, m2 in zip(means[:-1], means[1:])):
            continue
        ok = True
        for (a, c), m in zip(zip(bounds[:-1], bounds[1:]), means):
            # multipliers of the order constraints inside a block are the
            # partial sums of mean - v; they must be nonnegative
            partial = np.cumsum(m - v[a:c])[:-1]
            if np.any(partial < -tol):
                ok = False
                break
        if ok:
            return np.repeat(means, np.diff(bounds))
    raise RuntimeError("no partition satisfied the projection conditions")


def enumerate_prox_oracle(y: np.ndarray, tau: float) -> np.ndarray:
    """Wilcoxon prox ``argmin_z tau*h(z) + ||z - y||^2/2`` by exhaustive enumeration.

    Sorts ``y`` descending, subtracts the score shift and projects onto the
    nonincreasing cone by checking all ``2^(n-1)`` contiguous pool
    partitions. Only meant for ``n <= 10``.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if n < 2 or n > 10:
        raise InvalidArgumentError(f"enumeration oracle needs 2 <= n <= 10, got n={n}")
    if tau < 0:
        raise InvalidArgumentError("tau must be nonnegative")
    perm = np.argsort(-y, kind="stable")
    v = y[perm] - wilcoxon_shift(n, tau)
    out = np.empty(n)
    out[perm] = _project_by_enumeration(v)
    return out


def prox_objective(y: np.ndarray, z: np.ndarray, tau: float) -> float:
    """``tau*h(z) + ||z - y||^2/2`` for the Wilcoxon loss; handy for oracle checks."""
    d = np.asarray(z) - np.asarray(y)
    return tau * loss_value("rank", z) + 0.5 * float(d @ d)
