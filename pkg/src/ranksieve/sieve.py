"""Adaptive sieving: solve on a small column set, grow it by KKT screening.

Each round solves the problem restricted to the candidate set ``I`` to
accuracy ``eps_tilde``, then checks the KKT conditions of the full problem.
Off-support coordinates whose correlation ``|(A^T alpha)_j|`` exceeds
``lam + q`` are violators and the strongest of them join ``I``. With
``q <= (eps - eps_tilde) / sqrt(|I^c|)`` an empty violator set certifies the
full residual is below ``eps``, so every round that does not stop adds at
least one index.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ._kkt import kkt_residual
from .alm import AlmState
from .exceptions import InvalidArgumentError, NonConvergenceError
from .model import Loss, ProblemData, SolveReport, SolverConfig, objective
from .ppa import PpaResult, ppa_solve
from .prox import wilcoxon_subgradient

__all__ = [
    "SieveState",
    "TraceRecord",
    "as_solve",
    "expand_support",
    "initial_support",
    "kkt_residual",
]

logger = logging.getLogger(__name__)


@dataclass
class SieveState:
    I: np.ndarray
    x: np.ndarray
    u: np.ndarray
    alpha: np.ndarray
    res: float = np.inf
    l: int = 0
    support_sizes: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


@dataclass
class TraceRecord:
    round: int
    support: int
    res: float
    eta_kkt: float
    val: float
    ssn_time: float
    added: int

    FIELDS = ("round", "support", "res", "eta_kkt", "val", "ssn_time", "added")

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


def _top_k(scores: np.ndarray, k: int) -> np.ndarray:
    # descending by score, ties broken by lower index
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return order[:k]


def initial_support(data: ProblemData, m: int) -> np.ndarray:
    """Indices of the ``m`` largest ``|A^T s|`` where ``s`` is a loss subgradient at ``x = 0``."""
    if not 1 <= m <= data.p:
        raise InvalidArgumentError(f"need 1 <= m <= p, got m={m}, p={data.p}")
    if data.loss is Loss.WILCOXON:
        s = wilcoxon_subgradient(data.b)
    else:
        nb = float(np.linalg.norm(data.b))
        s = data.b / nb if nb > 0 else np.zeros_like(data.b)
    score = np.abs(data.A.T @ s)
    return np.sort(_top_k(score, m))


def violations(data: ProblemData, x: np.ndarray, ATalpha: np.ndarray, q: float) -> np.ndarray:
    """``dist((A^T alpha)_j, lam * subdiff|x_j| + [-q, q])`` for every coordinate."""
    lam = data.lam
    v = np.maximum(np.abs(ATalpha) - lam - q, 0.0)
    nz = x != 0
    v[nz] = np.maximum(np.abs(ATalpha[nz] - lam * np.sign(x[nz])) - q, 0.0)
    return v


def expand_support(
    data: ProblemData,
    state: SieveState,
    q: float,
    m_add: int,
    m_cap: int,
    stall: int = 1,
    ATalpha: np.ndarray | None = None,
) -> np.ndarray:
    """Violating off-support indices, strongest first, at most ``min(m_add*stall, m_cap)``."""
    if ATalpha is None:
        ATalpha = data.A.T @ state.alpha
    off = np.setdiff1d(np.arange(data.p), state.I, assume_unique=True)
    if off.size == 0:
        return off
    v = violations(data, state.x[off], ATalpha[off], q)
    viol = np.flatnonzero(v > 0)
    if viol.size == 0:
        return viol
    limit = min(m_add * stall, m_cap)
    pick = viol[_top_k(v[viol], limit)]
    return np.sort(off[pick])


def _presolve_support(data: ProblemData, m: int, config: SolverConfig) -> np.ndarray:
    from .refsolver import splitting_solve

    out = splitting_solve(data, tol=1e-4, max_iter=config.init_iters)
    nz = np.flatnonzero(out.x)
    if nz.size == 0:
        return initial_support(data, m)
    if nz.size > max(m, 1) * 4:
        nz = _top_k(np.abs(out.x), max(m, 1) * 4)
    return np.sort(nz)


def _restricted_warm(prev: PpaResult | None, I_old: np.ndarray, I_new: np.ndarray,
                     data: ProblemData, rho0: float) -> AlmState | None:
    if prev is None:
        return None
    st = prev.alm.copy()
    pos = np.searchsorted(I_new, I_old)
    x = np.zeros(I_new.shape[0])
    x[pos] = st.x
    z = np.zeros_like(x)
    z[pos] = st.z
    # new coordinates start at zero with the multiplier clipped into lam*[-1, 1]
    alpha2 = np.clip(data.A[:, I_new].T @ st.alpha1, -data.lam, data.lam)
    alpha2[pos] = st.alpha2
    return AlmState(x, st.u, z, st.alpha1, alpha2, st.rho, st.j)


def as_solve(
    data: ProblemData,
    config: SolverConfig | None = None,
    initial: np.ndarray | None = None,
    sieve: bool = True,
) -> SolveReport:
    """Adaptive-sieving solve of ``min h(b - Ax) + lam ||x||_1``.

    Args:
        data: problem instance.
        config: solver parameters.
        initial: optional starting index set; overrides ``config.init``.
        sieve: when False, solve once on the full column set.

    Returns:
        A :class:`SolveReport` with the full-length solution, ``u = b - Ax``,
        the multiplier, the KKT residuals and per-layer iteration counts. The
        per-round trace and support sizes are attached.

    Raises:
        NonConvergenceError: the residual stayed above ``eps`` even after a
            full-space solve. ``best`` holds a partial report.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    p = data.p
    m_add, m_cap = cfg.resolve_m(p)
    if not sieve:
        I = np.arange(p)
    elif initial is not None:
        I = np.unique(np.asarray(initial, dtype=np.intp))
    elif cfg.init == "refsolver":
        I = _presolve_support(data, m_add, cfg)
    else:
        I = initial_support(data, m_add)

    iters = {"as": 0, "ppa": 0, "alm": 0, "ssn": 0}
    ssn_time = 0.0
    trace: list[TraceRecord] = []
    state = SieveState(I, np.zeros(p), data.b.copy(), np.zeros(data.n))
    prev: PpaResult | None = None
    I_prev = I
    stall = 1
    theorem_violations = 0

    while True:
        sub = data.restrict(state.I)
        warm = _restricted_warm(prev, I_prev, state.I, data, cfg.rho0)
        x0 = warm.z if warm is not None else np.zeros(state.I.shape[0])
        tol = cfg.eps_tilde
        try:
            prev = ppa_solve(sub, x0, tol, cfg, warm, prev.sigma if prev is not None else None)
        except NonConvergenceError as exc:
            prev = exc.best
            logger.warning("restricted solve on |I|=%d did not converge: %s", state.I.size, exc)
        iters["as"] += 1
        iters["ppa"] += prev.stats.iterations
        iters["alm"] += prev.stats.alm_iterations
        iters["ssn"] += prev.stats.ssn_iterations
        ssn_time += prev.stats.ssn_time

        x = np.zeros(p)
        x[state.I] = prev.x
        ATalpha = data.A.T @ prev.alpha1
        Ax = data.A @ x
        res, eta = kkt_residual(data, x, prev.u, prev.alpha1, ATalpha, Ax)
        state.x, state.u, state.alpha = x, prev.u, prev.alpha1
        state.res = res
        state.support_sizes.append(int(state.I.size))
        state.residuals.append(res)
        record = TraceRecord(state.l, int(state.I.size), res, eta, objective(data, x), ssn_time, 0)
        trace.append(record)
        logger.info("round %d: |I|=%d res=%.3e eta=%.3e val=%.6f",
                    state.l, state.I.size, res, eta, record.val)
        if res <= cfg.eps or state.I.size == p:
            break
        if len(state.residuals) >= 2 and res > 0.9 * state.residuals[-2]:
            stall *= 2
        else:
            stall = 1
        off = p - state.I.size
        q = (cfg.eps - cfg.eps_tilde) / np.sqrt(off)
        J = expand_support(data, state, q, m_add, m_cap, stall, ATalpha)
        if J.size == 0:
            # cannot happen when the restricted solve met eps_tilde
            theorem_violations += 1
            logger.warning("empty violator set with residual %.3e > eps", res)
            J = np.setdiff1d(np.arange(p), state.I, assume_unique=True)
        record.added = int(J.size)
        I_prev = state.I
        state.I = np.union1d(state.I, J)
        state.l += 1
        if state.l > cfg.max_as_iter:
            break

    x = state.x
    u = data.b - data.A @ x
    alpha = state.alpha
    res_abs, eta = kkt_residual(data, x, state.u, alpha)
    _, eta_report = kkt_residual(data, x, u, alpha)
    report = SolveReport(
        x=x,
        u=u,
        alpha=alpha,
        val=objective(data, x),
        eta_kkt=max(eta, eta_report),
        res_abs=res_abs,
        iters=iters,
        wall_time_total=time.perf_counter() - t0,
        wall_time_ssn=ssn_time,
        support_history=list(state.support_sizes),
        trace=[r.as_row() for r in trace],
        support=state.I,
        theorem_violations=theorem_violations,
        converged=res_abs <= cfg.eps,
    )
    if not report.converged:
        report.message = f"residual {res_abs:.3e} above eps={cfg.eps:.1e}"
        raise NonConvergenceError(report.message, best=report)
    return report
