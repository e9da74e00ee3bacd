"""scikit-learn estimators wrapping the adaptive-sieving solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import InvalidArgumentError
from .model import Loss, ProblemData, SolverConfig
from .sieve import as_solve
from .tuning import LambdaSpec, rank_lambda, sqrt_lasso_lambda

__all__ = ["RankLasso", "SqrtLasso"]


class _SieveRegressor(RegressorMixin, BaseEstimator):
    _loss = Loss.WILCOXON

    def _config(self) -> SolverConfig:
        return SolverConfig(
            eps=self.eps, eps_tilde=self.eps_tilde, m_add=self.m_add, m_cap=self.m_cap
        )

    def _auto_lambda(self, X: np.ndarray) -> float:
        raise NotImplementedError

    def _center(self, X, y):
        raise NotImplementedError

    def fit(self, X, y):
        """Solve the penalized problem on ``(X, y)``.

        Sets ``coef_``, ``intercept_``, ``lambda_`` (the value actually used)
        and ``report_`` (the full solver report).
        """
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[0] < 2:
            raise InvalidArgumentError("need at least two samples")
        Xc, yc, x_off, y_off = self._center(X, y)
        if isinstance(self.lam, str):
            if self.lam != "auto":
                raise InvalidArgumentError(f"lam must be a positive float or 'auto', got {self.lam!r}")
            lam = self._auto_lambda(Xc)
        else:
            lam = float(self.lam)
        data = ProblemData(Xc, yc, lam, self._loss)
        report = as_solve(data, self._config(), sieve=self.sieve)
        self.coef_ = report.x
        self.intercept_ = self._intercept(X, y, report.x, x_off, y_off)
        self.lambda_ = lam
        self.report_ = report
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidArgumentError(
                f"X has {X.shape[1]} features, the model was fit with {self.n_features_in_}"
            )
        return X @ self.coef_ + self.intercept_


class RankLasso(_SieveRegressor):
    """L1-penalized regression with the pairwise Wilcoxon loss.

    The loss only sees differences of residuals, so the intercept is not
    identified by it; with ``fit_intercept`` it is set to the median residual.

    Parameters
    ----------
    lam : float or "auto"
        Penalty weight. ``"auto"`` uses the simulated rank-score quantile.
    fit_intercept : bool
    eps, eps_tilde : float
        Full-problem and restricted-problem KKT tolerances.
    m_add, m_cap : int or None
        Sieve growth per round and its cap; ``None`` scales with ``p``.
    sieve : bool
        Set False to solve on all columns at once.
    lambda_draws : int
        Permutations used for ``lam="auto"``.
    random_state : int or None
        Seed for ``lam="auto"``.
    """

    _loss = Loss.WILCOXON

    def __init__(self, lam="auto", fit_intercept=True, eps=1e-6, eps_tilde=9e-7,
                 m_add=None, m_cap=None, sieve=True, lambda_draws=1000, random_state=0):
        self.lam = lam
        self.fit_intercept = fit_intercept
        self.eps = eps
        self.eps_tilde = eps_tilde
        self.m_add = m_add
        self.m_cap = m_cap
        self.sieve = sieve
        self.lambda_draws = lambda_draws
        self.random_state = random_state

    def _auto_lambda(self, X):
        return rank_lambda(X, LambdaSpec(draws=self.lambda_draws, seed=self.random_state))

    def _center(self, X, y):
        # the loss is shift invariant; no centering needed
        return X, y, None, None

    def _intercept(self, X, y, coef, x_off, y_off):
        if not self.fit_intercept:
            return 0.0
        return float(np.median(y - X @ coef))


class SqrtLasso(_SieveRegressor):
    """Square-root lasso: ``min ||y - Xw||_2 + lam ||w||_1``.

    Parameters
    ----------
    lam : float or "auto"
        Penalty weight; ``"auto"`` is ``1.1 * Phi^{-1}(1 - 0.05/(2n))``.
    fit_intercept : bool
        Center ``X`` and ``y`` before solving.
    eps, eps_tilde, m_add, m_cap, sieve
        As in :class:`RankLasso`.
    """

    _loss = Loss.EUCLIDEAN

    def __init__(self, lam="auto", fit_intercept=True, eps=1e-6, eps_tilde=9e-7,
                 m_add=None, m_cap=None, sieve=True):
        self.lam = lam
        self.fit_intercept = fit_intercept
        self.eps = eps
        self.eps_tilde = eps_tilde
        self.m_add = m_add
        self.m_cap = m_cap
        self.sieve = sieve

    def _auto_lambda(self, X):
        return sqrt_lasso_lambda(X.shape[0])

    def _center(self, X, y):
        if not self.fit_intercept:
            return X, y, None, None
        x_off = X.mean(axis=0)
        y_off = float(y.mean())
        return X - x_off, y - y_off, x_off, y_off

    def _intercept(self, X, y, coef, x_off, y_off):
        if not self.fit_intercept:
            return 0.0
        return float(y_off - x_off @ coef)
