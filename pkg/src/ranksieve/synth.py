"""Seeded synthetic regression instances for the benchmark experiments E1 to E6.

E1/E2/E3 use Gaussian designs with compound-symmetry correlation, E4 an
i.i.d. exponential design with ``n = 10``, E5/E6 a Toeplitz design with
correlation ``0.5**|j-k|``. Responses are ``b = A x_true + error``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError
from .model import Loss, ProblemData

__all__ = [
    "CovarianceSpec",
    "ErrorSpec",
    "SynthSpec",
    "Instance",
    "generate",
    "covariance_quadratic",
    "draw_errors",
    "true_coefficients",
    "E2_ACTIVE",
    "spec_from_dict",
]

E2_ACTIVE = (
    [2.0] * 4 + [1.75] * 3 + [1.5] * 3 + [1.25] * 3 + [1.0] * 3
    + [0.75] * 3 + [0.5] * 3 + [0.25] * 3
)


@dataclass(frozen=True)
class CovarianceSpec:
    """Population covariance of one design row.

    kind is ``"compound"`` (unit diagonal, constant off-diagonal ``param``),
    ``"toeplitz"`` (``param**|j-k|``), ``"identity"`` or ``"exponential"``
    (i.i.d. exponential entries; ``param`` is the rate, variance ``1/param**2``).
    """

    kind: str
    p: int
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in ("compound", "toeplitz", "identity", "exponential"):
            raise InvalidArgumentError(f"unknown covariance kind {self.kind!r}")
        if self.p < 1:
            raise InvalidArgumentError("p must be at least 1")
        if self.kind == "compound":
            lower = -1.0 / (self.p - 1) if self.p > 1 else -1.0
            if not (lower < self.param < 1.0):
                raise InvalidArgumentError(
                    f"compound symmetry with r={self.param} is not positive definite for p={self.p}"
                )
        elif self.kind == "toeplitz":
            if not -1.0 < self.param < 1.0:
                raise InvalidArgumentError("Toeplitz parameter must lie in (-1, 1)")
        elif self.kind == "exponential" and not self.param > 0:
            raise InvalidArgumentError("exponential rate must be positive")

    def dense(self) -> np.ndarray:
        p = self.p
        if self.kind == "compound":
            return (1.0 - self.param) * np.eye(p) + self.param
        if self.kind == "toeplitz":
            idx = np.arange(p)
            return self.param ** np.abs(idx[:, None] - idx[None, :])
        if self.kind == "exponential":
            return np.eye(p) / self.param**2
        return np.eye(p)

    def quadratic(self, v: np.ndarray) -> float:
        return covariance_quadratic(self, v)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        p = self.p
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.param, size=(n, p))
        Z = rng.standard_normal((n, p))
        if self.kind == "identity":
            return Z
        if self.kind == "compound":
            r = self.param
            if r >= 0:
                # closed-form factor: sqrt(1-r) Z + sqrt(r) * shared factor
                return np.sqrt(1.0 - r) * Z + np.sqrt(r) * rng.standard_normal((n, 1))
            return Z @ np.linalg.cholesky(self.dense()).T
        # AR(1) recursion is the Cholesky factor of the Toeplitz matrix
        rho = self.param
        X = np.empty_like(Z)
        X[:, 0] = Z[:, 0]
        c = np.sqrt(1.0 - rho * rho)
        for j in range(1, p):
            X[:, j] = rho * X[:, j - 1] + c * Z[:, j]
        return X


def covariance_quadratic(sigma_x: CovarianceSpec, v: np.ndarray) -> float:
    """``v^T Sigma v`` without forming ``Sigma`` when the structure allows."""
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != sigma_x.p:
        raise InvalidArgumentError(f"v has length {v.shape[0]}, expected {sigma_x.p}")
    if sigma_x.kind == "compound":
        r = sigma_x.param
        return float((1.0 - r) * (v @ v) + r * v.sum() ** 2)
    if sigma_x.kind == "identity":
        return float(v @ v)
    if sigma_x.kind == "exponential":
        return float(v @ v) / sigma_x.param**2
    return float(v @ (sigma_x.dense() @ v))


@dataclass(frozen=True)
class ErrorSpec:
    """Error distribution.

    kind is one of ``normal`` (variance ``scale``), ``mixture``
    (0.95 N(0,1) + 0.05 N(0,100)), ``sqrt2_t4``, ``cauchy`` or ``t4_sqrt2``.
    """

    kind: str = "normal"
    scale: float = 1.0

    KINDS = ("normal", "mixture", "sqrt2_t4", "cauchy", "t4_sqrt2")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidArgumentError(f"unknown error distribution {self.kind!r}")
        if self.kind == "normal" and not self.scale > 0:
            raise InvalidArgumentError("normal variance must be positive")

    @classmethod
    def parse(cls, text: "str | ErrorSpec") -> "ErrorSpec":
        """Parse ``normal:0.25``, ``N(0,0.25)``, ``mixture``, ``cauchy`` and so on."""
        if isinstance(text, ErrorSpec):
            return text
        s = str(text).strip().lower().replace(" ", "")
        if s.startswith("n(0,") and s.endswith(")"):
            return cls("normal", float(s[4:-1]))
        if s.startswith("normal"):
            _, _, var = s.partition(":")
            return cls("normal", float(var) if var else 1.0)
        aliases = {"mn": "mixture", "mixture": "mixture", "sqrt2t4": "sqrt2_t4",
                   "sqrt2_t4": "sqrt2_t4", "cauchy": "cauchy", "t4sqrt2": "t4_sqrt2",
                   "t4_sqrt2": "t4_sqrt2"}
        if s in aliases:
            return cls(aliases[s])
        raise InvalidArgumentError(f"cannot parse error distribution {text!r}")

    def label(self) -> str:
        return f"normal:{self.scale:g}" if self.kind == "normal" else self.kind


def draw_errors(spec: ErrorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    kind = spec.kind
    if kind == "normal":
        return np.sqrt(spec.scale) * rng.standard_normal(n)
    if kind == "mixture":
        heavy = rng.random(n) < 0.05
        z = rng.standard_normal(n)
        return np.where(heavy, 10.0 * z, z)
    if kind == "sqrt2_t4":
        return np.sqrt(2.0) * rng.standard_t(4, n)
    if kind == "t4_sqrt2":
        return rng.standard_t(4, n) / np.sqrt(2.0)
    return rng.standard_cauchy(n)


_DEFAULTS = {
    # experiment: (covariance kind, parameter, error, beta pattern)
    "E1": ("compound", 0.5, "normal:0.25", "sparse3"),
    "E2": ("compound", 0.5, "normal:0.25", "staircase"),
    "E3": ("compound", 0.8, "normal:1", "sparse3"),
    "E4": ("exponential", 3.0, "normal:0.01", "random20"),
    "E5": ("toeplitz", 0.5, "normal:1", "ones5"),
    "E6": ("toeplitz", 0.5, "t4_sqrt2", "ones5"),
}


@dataclass(frozen=True)
class SynthSpec:
    """Which experiment to draw, at what size, with which error and seed.

    ``r`` overrides the compound-symmetry correlation (only E3 varies it over
    0.8, 0.2 and 0.5). ``exp_mean3`` switches the E4 exponential design from
    rate 3 to mean 3.
    """

    experiment: str
    n: int
    p: int
    error: ErrorSpec | str | None = None
    seed: int = 0
    r: float | None = None
    exp_mean3: bool = False

    def __post_init__(self):
        exp = str(self.experiment).upper()
        if exp not in _DEFAULTS:
            raise InvalidArgumentError(f"unknown experiment {self.experiment!r}")
        object.__setattr__(self, "experiment", exp)
        kind, param, err, beta = _DEFAULTS[exp]
        error = ErrorSpec.parse(self.error if self.error is not None else err)
        object.__setattr__(self, "error", error)
        if self.n < 2 or self.p < 1:
            raise InvalidArgumentError("need n >= 2 and p >= 1")
        if beta == "staircase" and self.p < 25:
            raise InvalidArgumentError("E2 needs p >= 25")
        if beta == "sparse3" and self.p < 3:
            raise InvalidArgumentError(f"{exp} needs p >= 3")
        if beta == "ones5" and self.p < 5:
            raise InvalidArgumentError(f"{exp} needs p >= 5")
        if self.r is not None:
            if exp != "E3":
                raise InvalidArgumentError("only E3 varies the correlation")
            if self.r not in (0.8, 0.2, 0.5):
                raise InvalidArgumentError("E3 uses r in {0.8, 0.2, 0.5}")
        if self.exp_mean3 and exp != "E4":
            raise InvalidArgumentError("exp_mean3 only applies to E4")
        if exp in ("E4", "E5") and error.kind != "normal":
            raise InvalidArgumentError(f"{exp} uses normal errors")
        if exp == "E6" and error.kind != "t4_sqrt2":
            raise InvalidArgumentError("E6 uses t4/sqrt(2) errors")

    @property
    def covariance(self) -> CovarianceSpec:
        kind, param, _, _ = _DEFAULTS[self.experiment]
        if self.r is not None:
            param = self.r
        if kind == "exponential" and self.exp_mean3:
            param = 1.0 / 3.0
        return CovarianceSpec(kind, self.p, param)

    @property
    def beta_pattern(self) -> str:
        return _DEFAULTS[self.experiment][3]

    def to_dict(self) -> dict:
        cov = self.covariance
        return {
            "experiment": self.experiment,
            "n": self.n,
            "p": self.p,
            "error": self.error.label(),
            "seed": self.seed,
            "covariance": {"kind": cov.kind, "param": cov.param},
            "beta": self.beta_pattern,
            "exp_mean3": self.exp_mean3,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def true_coefficients(pattern: str, p: int, rng: np.random.Generator | None = None) -> np.ndarray:
    x = np.zeros(p)
    if pattern == "sparse3":
        x[:3] = np.sqrt(3.0)
    elif pattern == "staircase":
        x[:25] = E2_ACTIVE
    elif pattern == "ones5":
        x[:5] = 1.0
    elif pattern == "random20":
        if rng is None:
            raise InvalidArgumentError("random pattern needs a generator")
        k = int(round(0.2 * p))
        idx = rng.choice(p, size=k, replace=False)
        x[idx] = rng.standard_normal(k)
    else:
        raise InvalidArgumentError(f"unknown coefficient pattern {pattern!r}")
    return x


@dataclass
class Instance:
    A: np.ndarray
    b: np.ndarray
    x_true: np.ndarray
    sigma_x: CovarianceSpec
    spec: SynthSpec
    noise: np.ndarray = field(repr=False, default=None)

    def problem(self, lam: float, loss: Loss | str = Loss.WILCOXON) -> ProblemData:
        return ProblemData(self.A, self.b, lam, loss)


def generate(spec: SynthSpec) -> Instance:
    """Draw design, coefficients and errors; deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    cov = spec.covariance
    A = cov.sample(spec.n, rng)
    x_true = true_coefficients(spec.beta_pattern, spec.p, rng)
    eps = draw_errors(spec.error, spec.n, rng)
    b = A @ x_true + eps
    return Instance(A, b, x_true, cov, spec, eps)


def spec_from_dict(d: dict) -> SynthSpec:
    return SynthSpec(**{k: d[k] for k in ("experiment", "n", "p", "error", "seed", "r", "exp_mean3") if k in d})

