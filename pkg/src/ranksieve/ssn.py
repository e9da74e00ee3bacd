"""Semismooth Newton-CG for the smooth inner problem of the augmented Lagrangian.

For fixed multipliers ``(alpha1, alpha2)``, penalty ``rho`` and proximal
center ``x_anchor`` the inner function is

    phi(x) = min_u {h(u) + rho/2 ||u - f1(x)||^2}
           + min_z {lam ||z||_1 + rho/2 ||z - f2(x)||^2}
           + ||x - x_anchor||^2 / (2 sigma)

with ``f1(x) = b - A x + alpha1/rho`` and ``f2(x) = x + alpha2/rho``. It is
strongly convex and continuously differentiable; its gradient is strongly
semismooth, so Newton steps built from a generalized Jacobian converge
quadratically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import NonConvergenceError, NumericFailureError, StagnationError
from .model import Loss, SolverConfig, loss_value

from .prox import (
    EuclideanJacobian,
    L1JacobianMask,
    LossJacobian,
    PoolDecomposition,
    l1_jacobian,
    loss_jacobian_apply,
    prox_loss,
    soft_threshold,
)

_EPS = np.finfo(float).eps


@dataclass
class SsnContext:
    """Data fixed during one inner minimization."""

    A: np.ndarray
    b: np.ndarray
    lam: float
    rho: float
    sigma: float
    alpha1: np.ndarray
    alpha2: np.ndarray
    x_anchor: np.ndarray
    loss: Loss = Loss.WILCOXON

    def __post_init__(self):
        self._c1 = self.b + self.alpha1 / self.rho
        self._c2 = self.alpha2 / self.rho

    def f1(self, x: np.ndarray, Ax: np.ndarray | None = None) -> np.ndarray:
        return self._c1 - (self.A @ x if Ax is None else Ax)

    def f2(self, x: np.ndarray) -> np.ndarray:
        return x + self._c2


@dataclass
class PhiEval:
    """Everything computed at one point of the inner problem."""

    x: np.ndarray
    Ax: np.ndarray
    phi: float
    grad: np.ndarray
    u: np.ndarray
    z: np.ndarray
    jac: LossJacobian
    f2: np.ndarray

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))


def _phi_parts(ctx: SsnContext, x: np.ndarray, Ax: np.ndarray):
    f1 = ctx.f1(x, Ax)
    f2 = ctx.f2(x)
    u, jac = prox_loss(ctx.loss, f1, 1.0 / ctx.rho)
    z = soft_threshold(f2, ctx.lam / ctx.rho)
    dx = x - ctx.x_anchor
    r1 = u - f1
    r2 = z - f2
    phi = (
        loss_value(ctx.loss, u)
        + 0.5 * ctx.rho * float(r1 @ r1)
        + ctx.lam * float(np.abs(z).sum())
        + 0.5 * ctx.rho * float(r2 @ r2)
        + float(dx @ dx) / (2.0 * ctx.sigma)
    )
    return phi, f1, f2, u, z, jac, dx


def eval_phi(ctx: SsnContext, x: np.ndarray) -> float:
    """Value of the inner function; the ``-||alpha||^2/(2 rho)`` constants are dropped."""
    x = np.asarray(x, dtype=float)
    return _phi_parts(ctx, x, ctx.A @ x)[0]


def evaluate(ctx: SsnContext, x: np.ndarray, Ax: np.ndarray | None = None) -> PhiEval:
    x = np.asarray(x, dtype=float)
    if Ax is None:
        Ax = ctx.A @ x
    phi, f1, f2, u, z, jac, dx = _phi_parts(ctx, x, Ax)
    grad = -ctx.rho * (ctx.A.T @ (f1 - u)) + ctx.rho * (f2 - z) + dx / ctx.sigma
    return PhiEval(x, Ax, phi, grad, u, z, jac, f2)


def eval_grad_phi(ctx: SsnContext, x: np.ndarray) -> tuple[np.ndarray, PhiEval]:
    """Gradient of the inner function plus the prox points and structures behind it."""
    ev = evaluate(ctx, x)
    return ev.grad, ev


@dataclass
class HessianAction:
    """Matrix-free element ``rho (A^T (I - V1) A + I - V2) + I / sigma``."""

    A: np.ndarray
    jac: LossJacobian
    mask: L1JacobianMask
    rho: float
    sigma: float

    def __call__(self, d: np.ndarray) -> np.ndarray:
        return hessian_apply(self, d)

    @classmethod
    def at(cls, ctx: SsnContext, ev: PhiEval) -> "HessianAction":
        return cls(ctx.A, ev.jac, l1_jacobian(ev.f2, ctx.lam / ctx.rho), ctx.rho, ctx.sigma)


def hessian_apply(h: HessianAction, d: np.ndarray) -> np.ndarray:
    Ad = h.A @ d
    t = Ad - loss_jacobian_apply(h.jac, Ad)
    return h.rho * (h.A.T @ t + d - h.mask.diag * d) + d / h.sigma


def dense_hessian(h: HessianAction) -> np.ndarray:
    """The matrix behind :class:`HessianAction`, for small restricted problems.

    For the Wilcoxon loss ``A^T (I - V1) A = D^T D`` where ``D`` is ``A`` with
    the pool means of its rows subtracted, which keeps the product PSD in
    floating point.
    """
    A = h.A
    jac = h.jac
    if isinstance(jac, PoolDecomposition):
        As = A[jac.perm]
        sums = np.add.reduceat(As, jac.starts, axis=0)
        D = As - (sums / jac.sizes[:, None])[jac.labels]
        K = D.T @ D
    elif isinstance(jac, EuclideanJacobian):
        if jac.norm <= jac.tau:
            K = A.T @ A
        else:
            c = A.T @ (jac.y / jac.norm)
            K = (jac.tau / jac.norm) * (A.T @ A - np.outer(c, c))
    else:
        raise TypeError(f"unsupported Jacobian {type(jac).__name__}")
    H = h.rho * K
    H[np.diag_indices_from(H)] += h.rho * (1.0 - h.mask.diag) + 1.0 / h.sigma
    return H


@dataclass
class CGInfo:
    iterations: int
    residual: float
    converged: bool


def cg_solve(
    h: Callable[[np.ndarray], np.ndarray],
    g: np.ndarray,
    eta: float,
    max_iter: int = 500,
    callback: Callable[[np.ndarray], None] | None = None,
) -> tuple[np.ndarray, CGInfo]:
    """Conjugate gradients for ``H d = -g`` until ``||H d + g|| <= eta ||g||``.

    Returns the last iterate with ``converged=False`` when ``max_iter`` runs
    out.
    """
    g = np.asarray(g, dtype=float)
    d = np.zeros_like(g)
    r = -g.copy()
    target = eta * float(np.linalg.norm(g))
    rr = float(r @ r)
    if np.sqrt(rr) <= target:
        return d, CGInfo(0, float(np.sqrt(rr)), True)
    q = r.copy()
    for it in range(1, max_iter + 1):
        Hq = h(q)
        qHq = float(q @ Hq)
        if not np.isfinite(qHq) or qHq <= 0.0:
            raise NumericFailureError(f"CG breakdown: q^T H q = {qHq!r}")
        step = rr / qHq
        d += step * q
        r -= step * Hq
        rr_new = float(r @ r)
        if not np.isfinite(rr_new):
            raise NumericFailureError("CG produced a non-finite residual")
        if callback is not None:
            callback(d)
        if np.sqrt(rr_new) <= target:
            return d, CGInfo(it, float(np.sqrt(rr_new)), True)
        q = r + (rr_new / rr) * q
        rr = rr_new
    return d, CGInfo(max_iter, float(np.sqrt(rr)), False)


Tolerance = Union[float, Callable[[PhiEval], float]]


def _direct_direction(h: HessianAction, g: np.ndarray, cfg: SolverConfig) -> np.ndarray | None:
    # a Cholesky solve beats CG once the restricted system is small, since
    # the Newton systems get badly conditioned as sigma and rho grow
    m = g.shape[0]
    if cfg.linear_solver == "cg" or (cfg.linear_solver == "auto" and m > cfg.direct_max):
        return None
    try:
        return -cho_solve(cho_factor(dense_hessian(h)), g)
    except LinAlgError:
        return None


@dataclass
class SsnStats:
    iterations: int = 0
    cg_iterations: int = 0
    line_search_steps: int = 0
    cg_degraded: int = 0
    grad_norms: list = field(default_factory=list)
    phis: list = field(default_factory=list)
    wall_time: float = 0.0


def ssn_minimize(
    ctx: SsnContext,
    x_init: np.ndarray,
    tol: Tolerance | None = None,
    config: SolverConfig | None = None,
    start: PhiEval | None = None,
) -> tuple[PhiEval, SsnStats]:
    """Globalized semismooth Newton method with CG directions and Armijo steps.

    Args:
        ctx: inner problem data.
        x_init: starting point.
        tol: gradient-norm tolerance, either fixed or recomputed from the
            current evaluation (used for the multiplier-dependent criteria of
            the outer loop). Defaults to ``config.eps_ssn``.
        config: solver parameters.
        start: evaluation at ``x_init`` if the caller already has it.

    Returns:
        The evaluation at the final iterate and the iteration statistics.

    Raises:
        StagnationError: no Armijo step after ``config.max_line_search`` trials.
        NonConvergenceError: ``config.max_ssn_iter`` exhausted; ``best`` holds
            the last evaluation.
    """
    cfg = config or SolverConfig()
    if tol is None:
        tol = cfg.eps_ssn
    tol_fn = tol if callable(tol) else (lambda _ev, _t=float(tol): _t)
    t0 = time.perf_counter()
    stats = SsnStats()
    ev = start if start is not None else evaluate(ctx, x_init)
    stats.grad_norms.append(ev.grad_norm)
    stats.phis.append(ev.phi)
    for _ in range(cfg.max_ssn_iter):
        gnorm = ev.grad_norm
        if gnorm <= tol_fn(ev):
            stats.wall_time = time.perf_counter() - t0
            return ev, stats
        H = HessianAction.at(ctx, ev)
        eta = min(cfg.eta_bar0, cfg.eta_bar1 * gnorm)
        d = _direct_direction(H, ev.grad, cfg)
        if d is None:
            d, cg = cg_solve(H, ev.grad, eta, cfg.cg_max_iter)
            stats.cg_iterations += cg.iterations
            stats.cg_degraded += int(not cg.converged)
        slope = float(ev.grad @ d)
        if not slope < 0.0:
            # only possible through a degraded CG solve; fall back to steepest descent
            d = -ev.grad
            slope = -gnorm**2
        Ad = ctx.A @ d
        slack = 8.0 * _EPS * (1.0 + abs(ev.phi))
        step = 1.0
        for _ls in range(cfg.max_line_search):
            x_new = ev.x + step * d
            trial = evaluate(ctx, x_new, ev.Ax + step * Ad)
            stats.line_search_steps += 1
            if trial.phi <= ev.phi + cfg.armijo_mu * step * slope + slack:
                break
            step *= cfg.armijo_delta
        else:
            stats.wall_time = time.perf_counter() - t0
            raise StagnationError(
                f"Armijo search failed after {cfg.max_line_search} trials "
                f"(|grad|={gnorm:.3e})",
                best=(ev, stats),
            )
        if not np.isfinite(trial.phi):
            raise NumericFailureError("non-finite inner objective")
        ev = trial
        stats.iterations += 1
        stats.grad_norms.append(ev.grad_norm)
        stats.phis.append(ev.phi)
    stats.wall_time = time.perf_counter() - t0
    if ev.grad_norm <= tol_fn(ev):
        return ev, stats
    raise NonConvergenceError(
        f"SSN hit {cfg.max_ssn_iter} iterations (|grad|={ev.grad_norm:.3e})", best=(ev, stats)
    )
