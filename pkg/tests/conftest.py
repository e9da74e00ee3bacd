import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_instance(rng, n, p, loss="rank", k=3, noise=0.5, lam_scale=0.3):
    """Small sparse regression instance with a moderate penalty."""
    from ranksieve.model import ProblemData
    from ranksieve.tuning import rank_lambda, sqrt_lasso_lambda

    A = rng.standard_normal((n, p))
    x = np.zeros(p)
    x[:k] = rng.uniform(1.0, 2.0, k)
    b = A @ x + noise * rng.standard_normal(n)
    if loss == "rank":
        lam = lam_scale * rank_lambda(A)
    else:
        lam = lam_scale * sqrt_lasso_lambda(n)
    return ProblemData(A, b, lam, loss)


# one line per acceptance criterion, replayed at the end of the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
