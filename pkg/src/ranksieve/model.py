"""Problem instances, solver configuration and the solve report."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

from .exceptions import InvalidArgumentError


class Loss(str, enum.Enum):
    """Loss selector for ``h`` in ``min h(b - Ax) + lambda * ||x||_1``."""

    WILCOXON = "rank"
    EUCLIDEAN = "sqrt"

    @classmethod
    def parse(cls, value: "Loss | str") -> "Loss":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {
            "rank": cls.WILCOXON,
            "wilcoxon": cls.WILCOXON,
            "wilcoxonrank": cls.WILCOXON,
            "sqrt": cls.EUCLIDEAN,
            "euclidean": cls.EUCLIDEAN,
            "euclideannorm": cls.EUCLIDEAN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidArgumentError(f"unknown loss {value!r}") from None


def wilcoxon_loss(u: np.ndarray) -> float:
    """Pairwise absolute-difference loss ``2/(n(n-1)) sum_{i<j} |u_i - u_j|``.

    Evaluated in O(n log n): after an ascending sort the k-th order statistic
    appears with coefficient ``2k - n - 1``.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    if n < 2:
        raise InvalidArgumentError("Wilcoxon loss needs at least two samples")
    us = np.sort(u)
    coef = 2.0 * np.arange(1, n + 1) - n - 1.0
    return float(2.0 * (coef @ us) / (n * (n - 1.0)))


def loss_value(loss: Loss | str, u: np.ndarray) -> float:
    loss = Loss.parse(loss)
    if loss is Loss.WILCOXON:
        return wilcoxon_loss(u)
    return float(np.linalg.norm(u))


@dataclass(frozen=True)
class ProblemData:
    """One instance of ``min_x h(b - A x) + lam * ||x||_1``.

    ``A`` is stored column-major because the sieve keeps gathering column
    subsets. Rows are samples.
    """

    A: np.ndarray
    b: np.ndarray
    lam: float
    loss: Loss = Loss.WILCOXON

    def __post_init__(self):
        A = np.asfortranarray(np.asarray(self.A, dtype=float))
        b = np.ascontiguousarray(np.asarray(self.b, dtype=float)).ravel()
        loss = Loss.parse(self.loss)
        if A.ndim != 2:
            raise InvalidArgumentError(f"A must be 2-D, got shape {A.shape}")
        if A.shape[0] != b.shape[0]:
            raise InvalidArgumentError(
                f"A has {A.shape[0]} rows but b has {b.shape[0]} entries"
            )
        n = A.shape[0]
        if n < (2 if loss is Loss.WILCOXON else 1):
            raise InvalidArgumentError(f"too few samples (n={n}) for loss {loss.value}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InvalidArgumentError("A and b must be finite")
        lam = float(self.lam)
        if not (np.isfinite(lam) and lam > 0):
            raise InvalidArgumentError(f"lambda must be positive, got {self.lam!r}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "loss", loss)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[1]

    def restrict(self, index: np.ndarray) -> "ProblemData":
        """Same instance with ``A`` reduced to the given columns."""
        return ProblemData(self.A[:, index], self.b, self.lam, self.loss)


def objective(data: ProblemData, x: np.ndarray) -> float:
    """``h(b - A x) + lam * ||x||_1`` for the loss selected in ``data``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (data.p,):
        raise InvalidArgumentError(f"x has shape {x.shape}, expected ({data.p},)")
    u = data.b - data.A @ x
    return loss_value(data.loss, u) + data.lam * float(np.abs(x).sum())


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, schedules and iteration caps for the whole solver stack.

    ``m_add``/``m_cap`` left as ``None`` resolve to ``round(p/100)`` and
    ``round(p/40)`` for the instance at hand. The summable sequences used by
    the proximal point and augmented Lagrangian stopping tests are all
    ``seq_base**k``.
    """

    eps: float = 1e-6
    eps_tilde: float = 9e-7
    eps_ssn: float = 1e-6
    m_add: int | None = None
    m_cap: int | None = None
    init: str = "screen"
    init_iters: int = 200
    sigma0: float = 1.0
    sigma_factor: float = 2.0
    sigma_max: float = 1e4
    rho0: float = 0.01
    rho_factor: float = 1.5
    rho_max: float = 1e8
    seq_base: float = 0.8
    armijo_mu: float = 1e-4
    armijo_delta: float = 0.5
    eta_bar0: float = 0.1
    eta_bar1: float = 1.0
    cg_max_iter: int = 500
    linear_solver: str = "auto"
    direct_max: int = 500
    max_as_iter: int = 1000
    max_ppa_iter: int = 500
    max_alm_iter: int = 200
    max_ssn_iter: int = 200
    max_line_search: int = 50

    def __post_init__(self):
        if not (0 < self.eps_tilde < self.eps):
            raise InvalidArgumentError("need 0 < eps_tilde < eps")
        if self.eps_ssn <= 0:
            raise InvalidArgumentError("eps_ssn must be positive")
        if self.sigma0 <= 0 or self.sigma_factor < 1:
            raise InvalidArgumentError("need sigma0 > 0 and sigma_factor >= 1")
        if self.rho0 <= 0 or self.rho_factor < 1:
            raise InvalidArgumentError("need rho0 > 0 and rho_factor >= 1")
        if not (0 < self.armijo_mu < 0.5):
            raise InvalidArgumentError("armijo_mu must lie in (0, 0.5)")
        if not (0 < self.armijo_delta < 1):
            raise InvalidArgumentError("armijo_delta must lie in (0, 1)")
        if not (0 < self.seq_base < 1):
            raise InvalidArgumentError("seq_base must lie in (0, 1)")
        if not (0 < self.eta_bar0 < 1) or self.eta_bar1 <= 0:
            raise InvalidArgumentError("need 0 < eta_bar0 < 1 and eta_bar1 > 0")
        if self.m_add is not None and self.m_add < 1:
            raise InvalidArgumentError("m_add must be at least 1")
        if self.linear_solver not in ("auto", "cg", "direct"):
            raise InvalidArgumentError(f"unknown linear solver {self.linear_solver!r}")
        if self.init not in ("screen", "refsolver"):
            raise InvalidArgumentError(f"unknown init method {self.init!r}")

    def resolve_m(self, p: int) -> tuple[int, int]:
        """Per-round addition count and cap for a problem with ``p`` features."""
        m_add = self.m_add if self.m_add is not None else max(1, int(round(p / 100)))
        m_add = min(m_add, p)
        m_cap = self.m_cap if self.m_cap is not None else int(round(p / 40))
        return m_add, max(m_cap, m_add)

    def updated(self, **changes: Any) -> "SolverConfig":
        known = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in changes.items() if k in known and v is not None})


@dataclass
class SolveReport:
    """Outcome of a solve: solution, residual, iteration counters and timings."""

    x: np.ndarray
    u: np.ndarray
    alpha: np.ndarray
    val: float
    eta_kkt: float
    res_abs: float
    iters: dict = field(default_factory=lambda: {"as": 0, "ppa": 0, "alm": 0, "ssn": 0})
    wall_time_total: float = 0.0
    wall_time_ssn: float = 0.0
    support_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    support: np.ndarray | None = None
    theorem_violations: int = 0
    converged: bool = True
    message: str = ""

    def to_dict(self, include_vectors: bool = True) -> dict:
        out = {
            "val": self.val,
            "eta_kkt": self.eta_kkt,
            "res_abs": self.res_abs,
            "iters": dict(self.iters),
            "wall_time_total": self.wall_time_total,
            "wall_time_ssn": self.wall_time_ssn,
            "support_history": list(map(int, self.support_history)),
            "theorem_violations": self.theorem_violations,
            "converged": self.converged,
            "message": self.message,
        }
        if include_vectors:
            out["x"] = self.x.tolist()
            out["u"] = self.u.tolist()
            out["alpha"] = self.alpha.tolist()
        return out
