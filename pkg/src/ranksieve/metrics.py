"""Evaluation metrics for a computed solution against the ground truth."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ._kkt import kkt_residual
from .model import ProblemData, objective
from .synth import CovarianceSpec, covariance_quadratic

__all__ = ["MetricsReport", "nonzero_rule", "evaluate", "correct_ratio"]


@dataclass
class MetricsReport:
    val: float
    eta_kkt: float
    l1_err: float
    l2_err: float
    me: float
    fp: int
    fn: int
    k_hat: int
    cr: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def nonzero_rule(x: np.ndarray, mass: float = 0.9999) -> tuple[int, np.ndarray]:
    """Numerical support of ``x``.

    ``k_hat`` is the shortest prefix of ``|x|`` sorted in decreasing order
    (stable, so ties go to the lower index) whose sum reaches ``mass * ||x||_1``.
    The support is every index with ``|x_i|`` at least the ``k_hat``-th largest
    magnitude. Zero gives ``(0, [])``.
    """
    ax = np.abs(np.asarray(x, dtype=float).ravel())
    total = float(ax.sum())
    if total == 0.0:
        return 0, np.empty(0, dtype=np.intp)
    order = np.argsort(-ax, kind="stable")
    csum = np.cumsum(ax[order])
    k_hat = int(np.searchsorted(csum, mass * total, side="left")) + 1
    k_hat = min(k_hat, ax.shape[0])
    cut = ax[order[k_hat - 1]]
    return k_hat, np.flatnonzero(ax >= cut)


def correct_ratio(I_l: np.ndarray, x_hat: np.ndarray) -> float:
    """``|I_l & I(x_hat)| / |I_l|``: share of the final sieve set in the full-space support."""
    I_l = np.asarray(I_l)
    if I_l.size == 0:
        return float("nan")
    _, ref = nonzero_rule(x_hat)
    return float(np.intersect1d(I_l, ref).size) / I_l.size


def evaluate(
    data: ProblemData,
    x: np.ndarray,
    u: np.ndarray,
    alpha: np.ndarray,
    x_true: np.ndarray,
    sigma_x: CovarianceSpec,
    x_ref: np.ndarray | None = None,
    support: np.ndarray | None = None,
) -> MetricsReport:
    """All benchmark metrics for one solve.

    ``cr`` needs the full-space reference solution ``x_ref`` and the final
    sieve index set ``support`` (defaults to ``I(x)`` when not given).
    """
    x = np.asarray(x, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    d = x - x_true
    _, eta = kkt_residual(data, x, u, alpha)
    k_hat, I_x = nonzero_rule(x)
    _, I_true = nonzero_rule(x_true)
    fp = int(np.setdiff1d(I_x, I_true).size)
    fn = int(np.setdiff1d(I_true, I_x).size)
    cr = None
    if x_ref is not None:
        cr = correct_ratio(support if support is not None else I_x, x_ref)
    return MetricsReport(
        val=objective(data, x),
        eta_kkt=eta,
        l1_err=float(np.abs(d).sum()),
        l2_err=float(np.linalg.norm(d)),
        me=covariance_quadratic(sigma_x, d),
        fp=fp,
        fn=fn,
        k_hat=k_hat,
        cr=cr,
    )
