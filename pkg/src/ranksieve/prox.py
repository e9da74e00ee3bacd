"""Proximal maps, Moreau envelopes and generalized-Jacobian actions.

Covers the L1 regularizer, the pairwise Wilcoxon loss and the Euclidean norm
loss. The Wilcoxon prox reduces to a projection onto the monotone cone after a
sort-and-shift, and the pools found by that projection give the Jacobian
element used by the Newton solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from numba import njit
from scipy.stats import rankdata

from .exceptions import InvalidArgumentError
from .model import Loss, loss_value


@dataclass(frozen=True)
class PoolDecomposition:
    """Pool structure of a monotone projection.

    Attributes:
        perm: ``perm[k]`` is the original index of the k-th entry of the
            sorted (nonincreasing) vector. Identity for a plain projection.
        starts: first sorted position of each pool.
        sizes: number of entries in each pool.
        values: pooled value of each pool (strictly decreasing).
        labels: pool id of every sorted position.
    """

    perm: np.ndarray
    starts: np.ndarray
    sizes: np.ndarray
    values: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return self.perm.shape[0]

    @property
    def active(self) -> np.ndarray:
        """True for pools that merge two or more entries (tied constraints)."""
        return self.sizes >= 2

    def ranges(self) -> list[tuple[int, int]]:
        return [(int(s), int(s + k)) for s, k in zip(self.starts, self.sizes)]


class L1JacobianMask(NamedTuple):
    """Diagonal of the chosen element of the Clarke Jacobian of soft-thresholding."""

    diag: np.ndarray


class EuclideanJacobian(NamedTuple):
    """Base point data for the Jacobian of the prox of ``tau * ||.||_2``."""

    y: np.ndarray
    tau: float
    norm: float


LossJacobian = Union[PoolDecomposition, EuclideanJacobian]


def soft_threshold(y: np.ndarray, tau: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - tau, 0.0)


def l1_jacobian(y: np.ndarray, tau: float) -> L1JacobianMask:
    """Entry 1 where ``|y_i| > tau`` strictly, else 0 (boundary goes to 0)."""
    return L1JacobianMask((np.abs(np.asarray(y, dtype=float)) > tau).astype(float))


@njit(cache=True)
def _pava_nonincreasing(z):
    # Single pass with back-merging; ties merge so adjacent pools differ strictly.
    n = z.shape[0]
    sums = np.empty(n)
    counts = np.empty(n, dtype=np.intp)
    top = 0
    for i in range(n):
        s = z[i]
        c = 1
        while top > 0 and sums[top - 1] * c <= s * counts[top - 1]:
            top -= 1
            s += sums[top]
            c += counts[top]
        sums[top] = s
        counts[top] = c
        top += 1
    sizes = counts[:top].copy()
    return sums[:top] / sizes, sizes


def _decompose(z: np.ndarray, perm: np.ndarray):
    values, sizes = _pava_nonincreasing(np.ascontiguousarray(z, dtype=np.float64))
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.intp)
    labels = np.repeat(np.arange(sizes.shape[0]), sizes)
    pools = PoolDecomposition(perm, starts, sizes, values, labels)
    return values[labels], pools


def project_nonincreasing(v: np.ndarray) -> tuple[np.ndarray, PoolDecomposition]:
    """Euclidean projection onto ``{x : x_1 >= x_2 >= ... >= x_n}``.

    Computed by pool-adjacent-violators. The returned decomposition has an
    identity permutation.
    """
    v = np.asarray(v, dtype=float).ravel()
    return _decompose(v, np.arange(v.shape[0]))


def wilcoxon_shift(n: int, tau: float) -> np.ndarray:
    """``2 tau / (n(n-1)) * w`` with ``w_k = n - 2k + 1``."""
    w = n - 2.0 * np.arange(1, n + 1) + 1.0
    return (2.0 * tau / (n * (n - 1.0))) * w


def prox_wilcoxon(y: np.ndarray, tau: float) -> tuple[np.ndarray, PoolDecomposition]:
    """Prox of ``tau * h`` for the pairwise Wilcoxon loss ``h``.

    Sort ``y`` into nonincreasing order (stable, so ties keep index order),
    subtract the rank-dependent shift, project onto the monotone cone and undo
    the permutation.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if n < 2:
        raise InvalidArgumentError("Wilcoxon prox needs n >= 2")
    perm = np.argsort(-y, kind="stable")
    proj, pools = _decompose(y[perm] - wilcoxon_shift(n, tau), perm)
    out = np.empty(n)
    out[perm] = proj
    return out, pools


def wilcoxon_jacobian_apply(pools: PoolDecomposition, v: np.ndarray) -> np.ndarray:
    """Apply ``U = P^T Diag(Gamma_1..Gamma_N) P``: average ``v`` inside each pool."""
    v = np.asarray(v, dtype=float)
    if v.shape != (pools.n,):
        raise InvalidArgumentError(f"v has shape {v.shape}, expected ({pools.n},)")
    vs = v[pools.perm]
    means = np.bincount(pools.labels, weights=vs, minlength=pools.sizes.shape[0]) / pools.sizes
    out = np.empty_like(v)
    out[pools.perm] = means[pools.labels]
    return out


def wilcoxon_subgradient(u: np.ndarray) -> np.ndarray:
    """Rank-score element of the subdifferential; ties get average ranks."""
    u = np.asarray(u, dtype=float).ravel()
    n = u.shape[0]
    if n < 2:
        raise InvalidArgumentError("Wilcoxon subgradient needs n >= 2")
    ranks = rankdata(u, method="average")
    return (2.0 / (n * (n - 1.0))) * (2.0 * ranks - n - 1.0)


def prox_euclidean(y: np.ndarray, tau: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    nrm = float(np.linalg.norm(y))
    if nrm <= tau:
        return np.zeros_like(y)
    return (1.0 - tau / nrm) * y


def euclidean_jacobian_apply(y: np.ndarray, tau: float, v: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    nrm = float(np.linalg.norm(y))
    if nrm <= tau:
        return np.zeros_like(v)
    return (1.0 - tau / nrm) * v + (tau / nrm**3) * float(y @ v) * y


def prox_loss(loss: Loss, y: np.ndarray, tau: float) -> tuple[np.ndarray, LossJacobian]:
    """Prox of ``tau * h`` together with the data needed for its Jacobian."""
    if loss is Loss.WILCOXON:
        return prox_wilcoxon(y, tau)
    nrm = float(np.linalg.norm(y))
    return prox_euclidean(y, tau), EuclideanJacobian(y, tau, nrm)


def loss_jacobian_apply(jac: LossJacobian, v: np.ndarray) -> np.ndarray:
    if isinstance(jac, PoolDecomposition):
        return wilcoxon_jacobian_apply(jac, v)
    return euclidean_jacobian_apply(jac.y, jac.tau, v)


def moreau_envelope_value(loss: Loss | str, y: np.ndarray, tau: float) -> float:
    """``min_z q(z) + ||z - y||^2 / (2 tau)`` evaluated at the prox point.

    ``loss`` selects ``q``: a :class:`Loss` member or ``"l1"`` for the
    (unweighted) L1 norm.
    """
    y = np.asarray(y, dtype=float)
    if isinstance(loss, str) and loss.lower() == "l1":
        z = soft_threshold(y, tau)
        return float(np.abs(z).sum() + np.sum((z - y) ** 2) / (2.0 * tau))
    loss = Loss.parse(loss)
    z, _ = prox_loss(loss, y, tau)
    return loss_value(loss, z) + float(np.sum((z - y) ** 2)) / (2.0 * tau)
