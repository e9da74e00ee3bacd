"""Inexact augmented Lagrangian method for one proximal-point subproblem.

The subproblem ``min h(b - Ax) + lam ||x||_1 + ||x - x_anchor||^2/(2 sigma)``
is split as ``min h(u) + lam ||z||_1 + ...`` subject to ``u = b - Ax`` and
``z = x``. Minimizing the augmented Lagrangian over ``u`` and ``z`` in closed
form leaves a smooth strongly convex function of ``x`` that the semismooth
Newton solver handles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .exceptions import NonConvergenceError
from .model import Loss, SolverConfig
from .ssn import PhiEval, SsnContext, SsnStats, ssn_minimize

logger = logging.getLogger(__name__)


@dataclass
class AlmProblem:
    """A proximal-point subproblem on (possibly restricted) columns ``A``."""

    A: np.ndarray
    b: np.ndarray
    lam: float
    loss: Loss
    sigma: float
    x_anchor: np.ndarray


@dataclass
class AlmState:
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    rho: float
    j: int = 0

    @classmethod
    def cold(cls, A: np.ndarray, b: np.ndarray, x: np.ndarray, rho: float) -> "AlmState":
        x = np.asarray(x, dtype=float).copy()
        return cls(x, b - A @ x, x.copy(), np.zeros(b.shape[0]), np.zeros(x.shape[0]), rho)

    def copy(self) -> "AlmState":
        return replace(
            self,
            x=self.x.copy(),
            u=self.u.copy(),
            z=self.z.copy(),
            alpha1=self.alpha1.copy(),
            alpha2=self.alpha2.copy(),
        )


@dataclass
class AlmStats:
    iterations: int = 0
    ssn_iterations: int = 0
    cg_iterations: int = 0
    ssn_time: float = 0.0
    distances: list = field(default_factory=list)
    primal_residuals: list = field(default_factory=list)
    dual_values: list = field(default_factory=list)


def _l1_block_distance(g: np.ndarray, x: np.ndarray, lam: float) -> np.ndarray:
    # coordinatewise dist(g_i, lam * subdiff|x_i|)
    nz = x != 0
    out = np.maximum(np.abs(g) - lam, 0.0)
    out[nz] = np.abs(g[nz] - lam * np.sign(x[nz]))
    return out


def surrogate_Sk_distance(
    state: AlmState, problem: AlmProblem, Az: np.ndarray | None = None
) -> float:
    """Distance from 0 to the KKT operator of the subproblem at ``(state.z, state.u)``.

    ``z`` is the prox point of the L1 term and carries exact zeros, so it is
    the primal point that gets certified. The multiplier ``state.alpha1`` is
    placed by the ALM update in the subdifferential of ``h`` at ``state.u``,
    which makes that block zero. The remaining two blocks are computed
    exactly: the L1 block coordinatewise and the coupling block as
    ``||u - b + Az||``.
    """
    if Az is None:
        Az = problem.A @ state.z
    g = problem.A.T @ state.alpha1 - (state.z - problem.x_anchor) / problem.sigma
    d1 = _l1_block_distance(g, state.z, problem.lam)
    d3 = state.u - problem.b + Az
    return float(np.sqrt(d1 @ d1 + d3 @ d3))


Tolerance = Union[float, Callable[[AlmState], float]]


def alm_solve(
    problem: AlmProblem,
    state: AlmState,
    tol: Tolerance,
    config: SolverConfig | None = None,
) -> tuple[AlmState, AlmStats]:
    """Run ALM iterations until the subproblem distance drops below ``tol``.

    Each iteration minimizes the reduced augmented Lagrangian with SSN (warm
    started at ``state.x``), recovers ``u`` and ``z`` as prox points and takes
    the multiplier step ``alpha <- alpha - rho * (u - b + Ax, z - x)``.
    The inner gradient tolerance is the tightest of ``eps_ssn`` and the
    simplified criteria, each driven by the summable sequence
    ``seq_base**j``; it is floored at a tenth of the outer target since
    finer inner accuracy cannot change the stopping decision.
    """
    cfg = config or SolverConfig()
    tol_fn = tol if callable(tol) else (lambda _s, _t=float(tol): _t)
    stats = AlmStats()
    state = state.copy()
    A, b = problem.A, problem.b
    ev: PhiEval | None = None
    for j in range(cfg.max_alm_iter):
        rho = state.rho
        ctx = SsnContext(
            A, b, problem.lam, rho, problem.sigma, state.alpha1, state.alpha2,
            problem.x_anchor, problem.loss,
        )
        seq = cfg.seq_base ** (state.j + 1)
        outer = tol_fn(state)
        floor = max(0.1 * outer, 1e-14)

        def inner_tol(e: PhiEval, _rho=rho, _seq=seq, _floor=floor) -> float:
            pr = np.sqrt(np.sum((e.u - b + e.Ax) ** 2) + np.sum((e.z - e.x) ** 2))
            crit = min(
                cfg.eps_ssn,
                _seq / np.sqrt(_rho),
                _seq * np.sqrt(_rho) * pr,
                _seq * pr,
            )
            return max(crit, _floor)

        try:
            ev, sstats = ssn_minimize(ctx, state.x, inner_tol, cfg)
        except NonConvergenceError as exc:
            ev, sstats = exc.best
            logger.debug("ALM iteration %d: inner solve stopped early: %s", j, exc)
            if not np.all(np.isfinite(ev.x)):
                raise
        _accumulate(stats, sstats)
        pres = ev.u - b + ev.Ax
        zres = ev.z - ev.x
        # multiplier step written via prox residuals: rho*(f1 - u), rho*(f2 - z)
        alpha1 = rho * (ctx.f1(ev.x, ev.Ax) - ev.u)
        alpha2 = rho * (ev.f2 - ev.z)
        stats.dual_values.append(
            ev.phi - (state.alpha1 @ state.alpha1 + state.alpha2 @ state.alpha2) / (2 * rho)
        )
        state = AlmState(ev.x.copy(), ev.u, ev.z, alpha1, alpha2, rho, state.j + 1)
        stats.iterations += 1
        stats.primal_residuals.append(float(np.sqrt(pres @ pres + zres @ zres)))
        dist = surrogate_Sk_distance(state, problem)
        stats.distances.append(dist)
        if dist <= tol_fn(state):
            return state, stats
        state.rho = min(rho * cfg.rho_factor, cfg.rho_max)
    raise NonConvergenceError(
        f"ALM hit {cfg.max_alm_iter} iterations (dist={stats.distances[-1]:.3e})",
        best=(state, stats),
    )


def _accumulate(stats: AlmStats, sstats: SsnStats) -> None:
    stats.ssn_iterations += sstats.iterations
    stats.cg_iterations += sstats.cg_iterations
    stats.ssn_time += sstats.wall_time
