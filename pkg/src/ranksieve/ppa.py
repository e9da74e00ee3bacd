"""Proximal point outer loop for ``min h(b - Ax) + lam ||x||_1``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .alm import AlmProblem, AlmState, alm_solve
from .exceptions import NonConvergenceError
from ._kkt import kkt_residual
from .model import ProblemData, SolverConfig, objective

logger = logging.getLogger(__name__)


@dataclass
class PpaState:
    x: np.ndarray
    sigma: float
    k: int = 0
    alm: AlmState | None = None


@dataclass
class PpaStats:
    iterations: int = 0
    alm_iterations: int = 0
    ssn_iterations: int = 0
    cg_iterations: int = 0
    ssn_time: float = 0.0
    residuals: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)


@dataclass
class PpaResult:
    x: np.ndarray
    u: np.ndarray
    alpha1: np.ndarray
    alm: AlmState
    residual: float
    stats: PpaStats
    sigma: float = 1.0


def ppa_solve(
    data: ProblemData,
    x_init: np.ndarray,
    target_tol: float,
    config: SolverConfig | None = None,
    warm: AlmState | None = None,
    sigma_init: float | None = None,
) -> PpaResult:
    """Proximal point iterations until the KKT residual of ``data`` is below ``target_tol``.

    ``data`` is typically the column-restricted problem built by the sieve.
    Each subproblem is solved by :func:`alm_solve`, stopped once the subproblem
    distance satisfies both summable-error tests
    ``dist <= gamma_k / sigma_k`` and ``dist <= (delta_k / sigma_k) ||x_{k+1} - x_k||``
    (``gamma_k = delta_k = seq_base**k``), with a floor tied to ``target_tol``.
    ``warm`` carries multipliers from a previous solve and ``sigma_init``
    resumes the proximal parameter schedule (default ``config.sigma0``).
    """
    cfg = config or SolverConfig()
    if target_tol <= 0:
        raise ValueError("target_tol must be positive")
    A, b = data.A, data.b
    x_k = np.asarray(x_init, dtype=float).copy()
    state = warm.copy() if warm is not None else AlmState.cold(A, b, x_k, cfg.rho0)
    state.x = x_k.copy()
    stats = PpaStats()

    if warm is not None:
        res, _ = kkt_residual(data, x_k, state.u, state.alpha1)
        if res <= target_tol:
            stats.residuals.append(res)
            return PpaResult(x_k, state.u, state.alpha1, state, res, stats, sigma_init or cfg.sigma0)

    sigma = cfg.sigma0 if sigma_init is None else min(max(sigma_init, cfg.sigma0), cfg.sigma_max)
    floor = 0.3 * target_tol
    res = np.inf
    for k in range(cfg.max_ppa_iter):
        problem = AlmProblem(A, b, data.lam, data.loss, sigma, x_k)
        seq = cfg.seq_base ** (k + 1)

        def alm_tol(st: AlmState, _x=x_k, _s=sigma, _q=seq) -> float:
            step = float(np.linalg.norm(st.z - _x))
            return max(min(_q / _s, (_q / _s) * step), floor)

        # multipliers carry over, the penalty restarts: a large rho leaves the
        # inner function piecewise linear on tiny pieces and stalls Newton
        state.rho = cfg.rho0
        try:
            state, astats = alm_solve(problem, state, alm_tol, cfg)
        except NonConvergenceError as exc:
            state, astats = exc.best
            logger.debug("PPA iteration %d: ALM stopped early: %s", k, exc)
        stats.iterations += 1
        stats.alm_iterations += astats.iterations
        stats.ssn_iterations += astats.ssn_iterations
        stats.cg_iterations += astats.cg_iterations
        stats.ssn_time += astats.ssn_time
        # the sparse prox point z is the proximal point iterate
        x_new = state.z.copy()
        stats.step_norms.append(float(np.linalg.norm(x_new - x_k)))
        res, _ = kkt_residual(data, x_new, state.u, state.alpha1)
        stats.residuals.append(res)
        stats.objectives.append(objective(data, x_new))
        if res <= target_tol:
            return PpaResult(x_new, state.u, state.alpha1, state, res, stats, sigma)
        x_k = x_new
        sigma = min(sigma * cfg.sigma_factor, cfg.sigma_max)
    raise NonConvergenceError(
        f"PPA hit {cfg.max_ppa_iter} iterations (residual={res:.3e})",
        best=PpaResult(state.z.copy(), state.u, state.alpha1, state, res, stats, sigma),
    )
