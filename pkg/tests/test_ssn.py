import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ranksieve.model import Loss, SolverConfig
from ranksieve.prox import L1JacobianMask, moreau_envelope_value, prox_wilcoxon
from ranksieve.ssn import (
    HessianAction,
    SsnContext,
    cg_solve,
    dense_hessian,
    eval_grad_phi,
    eval_phi,
    evaluate,
    hessian_apply,
    ssn_minimize,
)


def make_ctx(rng, n=8, p=5, loss=Loss.WILCOXON, rho=1.5, sigma=2.0, lam=0.3, scale=1.0):
    A = rng.standard_normal((n, p))
    return SsnContext(
        A, rng.standard_normal(n), lam, rho, sigma,
        scale * rng.standard_normal(n), scale * rng.standard_normal(p),
        rng.standard_normal(p), loss,
    )


def phi_direct(ctx, x):
    # sum of envelope values, written from the definition
    f1 = ctx.b - ctx.A @ x + ctx.alpha1 / ctx.rho
    f2 = x + ctx.alpha2 / ctx.rho
    t1 = moreau_envelope_value(ctx.loss, f1, 1.0 / ctx.rho)
    z = np.sign(f2) * np.maximum(np.abs(f2) - ctx.lam / ctx.rho, 0)
    t2 = ctx.lam * np.abs(z).sum() + 0.5 * ctx.rho * np.sum((z - f2) ** 2)
    return t1 + t2 + np.sum((x - ctx.x_anchor) ** 2) / (2 * ctx.sigma)


@pytest.mark.parametrize("loss", list(Loss))
def test_phi_matches_envelope_definition(rng, loss):
    ctx = make_ctx(rng, loss=loss)
    for _ in range(10):
        x = rng.standard_normal(5)
        assert eval_phi(ctx, x) == pytest.approx(phi_direct(ctx, x), rel=1e-12)


def test_phi_zero_case(rng):
    n, p = 6, 3
    b = rng.standard_normal(n)
    ctx = SsnContext(np.zeros((n, p)), b, 0.5, 2.0, 1.0, np.zeros(n), np.zeros(p), np.zeros(p))
    expected = moreau_envelope_value(Loss.WILCOXON, b, 0.5)
    assert eval_phi(ctx, np.zeros(p)) == pytest.approx(expected, rel=1e-14)


def test_grad_zero_design_large_lambda(rng):
    p = 4
    anchor = rng.standard_normal(p)
    ctx = SsnContext(np.zeros((5, p)), rng.standard_normal(5), 1e6, 1.0, 3.0,
                     np.zeros(5), np.zeros(p), anchor)
    g, _ = eval_grad_phi(ctx, np.zeros(p))
    np.testing.assert_allclose(g, -anchor / 3.0, atol=1e-14)


def test_sqrt_phi_decreases_toward_least_squares(rng):
    n, p = 12, 3
    A = rng.standard_normal((n, p))
    b = A @ np.array([1.0, -2.0, 0.5]) + 0.01 * rng.standard_normal(n)
    ctx = SsnContext(A, b, 1e-8, 1e3, 1e8, np.zeros(n), np.zeros(p), np.zeros(p), Loss.EUCLIDEAN)
    x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
    vals = [eval_phi(ctx, t * x_ls) for t in np.linspace(0, 1, 11)]
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("loss", list(Loss))
def test_gradient_central_differences(rng, loss):
    h = 1e-6
    for _ in range(25):
        ctx = make_ctx(rng, loss=loss)
        x = rng.standard_normal(5)
        g, _ = eval_grad_phi(ctx, x)
        fd = np.array([(eval_phi(ctx, x + h * e) - eval_phi(ctx, x - h * e)) / (2 * h) for e in np.eye(5)])
        assert np.linalg.norm(fd - g) <= 1e-6 * max(1.0, np.linalg.norm(g))


def _stable_structure(ctx, x, y):
    e1, e2 = evaluate(ctx, x), evaluate(ctx, y)
    if ctx.loss is Loss.WILCOXON:
        same_loss = np.array_equal(np.sort(e1.jac.labels[np.argsort(e1.jac.perm)]),
                                   np.sort(e2.jac.labels[np.argsort(e2.jac.perm)])) and \
            np.array_equal(e1.jac.labels[np.argsort(e1.jac.perm)], e2.jac.labels[np.argsort(e2.jac.perm)])
    else:
        same_loss = (e1.jac.norm > e1.jac.tau) == (e2.jac.norm > e2.jac.tau)
    H1, H2 = HessianAction.at(ctx, e1), HessianAction.at(ctx, e2)
    return same_loss and np.array_equal(H1.mask.diag, H2.mask.diag)


@pytest.mark.parametrize("loss", list(Loss))
def test_hessian_matches_gradient_differences(rng, loss):
    h = 1e-7
    checked = 0
    for _ in range(60):
        ctx = make_ctx(rng, loss=loss)
        x = rng.standard_normal(5)
        d = rng.standard_normal(5)
        if not _stable_structure(ctx, x - h * d, x + h * d):
            continue
        H = HessianAction.at(ctx, evaluate(ctx, x))
        fd = (eval_grad_phi(ctx, x + h * d)[0] - eval_grad_phi(ctx, x - h * d)[0]) / (2 * h)
        Hd = hessian_apply(H, d)
        assert np.linalg.norm(fd - Hd) <= 1e-5 * max(1.0, np.linalg.norm(Hd))
        checked += 1
    assert checked > 20


@given(st.integers(0, 10**6), st.sampled_from(list(Loss)))
def test_hessian_symmetric_and_dense_agrees(seed, loss):
    r = np.random.default_rng(seed)
    ctx = make_ctx(r, loss=loss)
    H = HessianAction.at(ctx, evaluate(ctx, r.standard_normal(5)))
    v, w = r.standard_normal(5), r.standard_normal(5)
    assert v @ H(w) == pytest.approx(w @ H(v), rel=1e-10, abs=1e-10)
    np.testing.assert_allclose(dense_hessian(H) @ v, H(v), rtol=1e-10, atol=1e-10)


def test_hessian_singleton_pools_zero_mask(rng):
    A = rng.standard_normal((4, 3))
    _, pools = prox_wilcoxon(np.array([30.0, 10.0, -10.0, -30.0]), 0.01)
    H = HessianAction(A, pools, L1JacobianMask(np.zeros(3)), 2.0, 0.5)
    d = rng.standard_normal(3)
    np.testing.assert_allclose(H(d), 2.0 * d + d / 0.5, atol=1e-12)
    # V1 = I means the loss adds nothing; with zero mask only rho*d + d/sigma remain


def test_hessian_full_pool_full_mask(rng):
    A = rng.standard_normal((5, 3))
    _, pools = prox_wilcoxon(1e-3 * rng.standard_normal(5), 100.0)
    assert pools.sizes.tolist() == [5]
    H = HessianAction(A, pools, L1JacobianMask(np.ones(3)), 2.0, 0.5)
    d = rng.standard_normal(3)
    Ad = A @ d
    np.testing.assert_allclose(H(d), 2.0 * A.T @ (Ad - Ad.mean()) + d / 0.5, atol=1e-12)


def test_newton_matrix_quadratic_form_bound(rng):
    for _ in range(300):
        n, p = rng.integers(2, 12), rng.integers(1, 8)
        A = rng.standard_normal((n, p)) * rng.uniform(0.1, 10)
        _, pools = prox_wilcoxon(rng.standard_normal(n), rng.uniform(0.01, 10))
        mask = L1JacobianMask((rng.random(p) < 0.5).astype(float))
        sigma = rng.uniform(0.1, 1e3)
        H = HessianAction(A, pools, mask, rng.uniform(0.01, 1e3), sigma)
        d = rng.standard_normal(p)
        assert d @ H(d) >= d @ d / sigma - 1e-12


# ---- CG

def test_cg_scaled_identity():
    g = np.array([1.0, -2.0, 0.5])
    d, info = cg_solve(lambda v: v / 4.0, g, 1e-12)
    np.testing.assert_allclose(d, -4.0 * g)
    assert info.iterations == 1


def test_cg_energy_error_monotone(rng):
    for _ in range(20):
        M = rng.standard_normal((15, 15))
        H = M @ M.T + 0.1 * np.eye(15)
        g = rng.standard_normal(15)
        exact = -np.linalg.solve(H, g)
        errs = []
        d, info = cg_solve(lambda v: H @ v, g, 1e-10, 200,
                           callback=lambda dd: errs.append((dd - exact) @ H @ (dd - exact)))
        assert info.converged
        assert np.linalg.norm(H @ d + g) <= 1e-10 * np.linalg.norm(g)
        assert np.all(np.diff(errs) <= 1e-10 * max(errs[0], 1.0))
        assert g @ d < 0


# ---- SSN driver

@pytest.mark.parametrize("loss", list(Loss))
@pytest.mark.parametrize("solver", ["cg", "direct"])
def test_ssn_converges_and_is_minimal(rng, loss, solver):
    ctx = make_ctx(rng, n=15, p=6, loss=loss)
    cfg = SolverConfig(linear_solver=solver)
    ev, stats = ssn_minimize(ctx, np.zeros(6), 1e-10, cfg)
    assert ev.grad_norm <= 1e-10
    assert np.all(np.diff(stats.phis) < 0)
    for _ in range(100):
        probe = ev.x + rng.standard_normal(6) * rng.uniform(1e-4, 1)
        assert eval_phi(ctx, probe) >= ev.phi - 1e-12


def test_ssn_already_optimal(rng):
    ctx = make_ctx(rng)
    ev, _ = ssn_minimize(ctx, np.zeros(5), 1e-12)
    ev2, stats = ssn_minimize(ctx, ev.x, 1e-10)
    assert stats.iterations == 0
    np.testing.assert_array_equal(ev2.x, ev.x)


def test_ssn_matches_grid_search(rng):
    n, p = 6, 4
    ctx = make_ctx(rng, n=n, p=p, rho=1.0, sigma=1.0)
    ev, _ = ssn_minimize(ctx, np.zeros(p), 1e-12)
    # coarse-to-fine grid over the 4-dimensional inner function
    center, width = np.zeros(p), 4.0
    for _ in range(24):
        axes = [np.linspace(c - width, c + width, 7) for c in center]
        best = min(itertools.product(*axes), key=lambda pt: eval_phi(ctx, np.array(pt)))
        center, width = np.array(best), width / 1.5
    np.testing.assert_allclose(ev.x, center, atol=1e-4)


@pytest.mark.parametrize("loss", list(Loss))
def test_ssn_local_quadratic_rate(rng, loss):
    # small penalty keeps the loss curvature, so Newton runs into its fast phase
    ctx = make_ctx(rng, n=30, p=8, loss=loss, rho=0.5, sigma=1.0, lam=0.05, scale=0.1)
    ev, stats = ssn_minimize(ctx, np.zeros(8), 1e-13, SolverConfig(linear_solver="direct"))
    g = [v for v in stats.grad_norms if v > 1e-12]
    assert len(g) >= 2
    # once in the fast phase the gradient drops at least like C * g^2 with moderate C
    tail = g[-3:]
    for a, b in zip(tail[:-1], tail[1:]):
        assert b <= max(1e3 * a * a, 1e-3 * a)
