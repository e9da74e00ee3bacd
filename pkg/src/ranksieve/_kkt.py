"""KKT residual of ``min h(u) + lam ||x||_1`` s.t. ``u = b - Ax``."""

from __future__ import annotations

import numpy as np

from .model import ProblemData
from .prox import prox_loss, soft_threshold


def kkt_blocks(data: ProblemData, x, u, alpha, ATalpha=None, Ax=None):
    if ATalpha is None:
        ATalpha = data.A.T @ alpha
    if Ax is None:
        Ax = data.A @ x
    r_x = x - soft_threshold(x + ATalpha, data.lam)
    r_u = u - prox_loss(data.loss, u + alpha, 1.0)[0]
    r_c = u - data.b + Ax
    return r_x, r_u, r_c


def kkt_residual(data: ProblemData, x, u, alpha, ATalpha=None, Ax=None) -> tuple[float, float]:
    """Absolute residual norm and the relative residual ``eta_KKT``.

    The residual stacks ``x - Prox_{lam||.||_1}(x + A^T alpha)``,
    ``u - Prox_h(u + alpha)`` and ``u - b + A x``; it vanishes exactly at KKT
    points. ``eta_KKT`` is the largest of the three block norms, each divided
    by ``1 + ||u||`` or ``1 + ||x||``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    r_x, r_u, r_c = kkt_blocks(data, x, u, alpha, ATalpha, Ax)
    nx, nu, nc = (float(np.linalg.norm(r)) for r in (r_x, r_u, r_c))
    res_abs = float(np.sqrt(nx**2 + nu**2 + nc**2))
    unorm = 1.0 + float(np.linalg.norm(u))
    eta = max(nu / unorm, nx / (1.0 + float(np.linalg.norm(x))), nc / unorm)
    return res_abs, eta
