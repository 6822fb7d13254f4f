"""DCT basis invariants, soft threshold, power iteration, and the lasso solver."""

import numpy as np
import pytest

from gencut.lasso import (
    DctBasis,
    lasso_dct_solve,
    power_iteration_sq_norm,
    soft_threshold,
)
from gencut.sensing import make_operator, measure

SHAPE = (1, 16, 16)


@pytest.fixture
def basis():
    return DctBasis(SHAPE)


def test_dct_roundtrip(basis):
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=SHAPE)
        np.testing.assert_allclose(basis.idct2(basis.dct2(x)), x, atol=1e-10)


def test_dct_constant_image_single_coeff(basis):
    z = basis.dct2(np.full(SHAPE, 0.7))
    flat = z.reshape(-1)
    assert abs(flat[0]) > 1e-6
    assert np.max(np.abs(flat[1:])) < 1e-12


def test_dct_parseval(basis):
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.normal(size=SHAPE)
        assert abs(np.linalg.norm(basis.dct2(x)) - np.linalg.norm(x)) < 1e-10


def test_dct_matches_scipy_oracle(basis):
    scipy_fft = pytest.importorskip("scipy.fft")
    rng = np.random.default_rng(2)
    x = rng.normal(size=SHAPE)
    ours = basis.dct2(x)
    ref = scipy_fft.dctn(x[0], norm="ortho")
    np.testing.assert_allclose(ours[0], ref, atol=1e-12)


def test_dct_dim_mismatch(basis):
    with pytest.raises(ValueError):
        basis.dct2(np.zeros((1, 8, 8)))


def test_soft_threshold_values():
    assert soft_threshold(np.array([0.5]), 0.2)[0] == pytest.approx(0.3)
    assert soft_threshold(np.array([-0.1]), 0.2)[0] == 0.0
    assert soft_threshold(np.array([-0.5]), 0.2)[0] == pytest.approx(-0.3)
    with pytest.raises(ValueError):
        soft_threshold(np.array([1.0]), -0.1)


def test_soft_threshold_prox_subgradient_optimality():
    # v' = argmin 1/2||u - v||^2 + t||u||_1  iff  v - v' in t * sign-set(v')
    rng = np.random.default_rng(3)
    for _ in range(200):
        v = rng.normal(scale=2.0, size=17)
        t = float(rng.uniform(0.01, 1.5))
        u = soft_threshold(v, t)
        resid = v - u
        on = u != 0.0
        assert np.allclose(resid[on], t * np.sign(u[on]), atol=1e-12)
        assert np.all(np.abs(resid[~on]) <= t + 1e-12)


def test_power_iteration_matches_svd():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.normal(size=(20, 30))
        est = power_iteration_sq_norm(lambda v: a @ v, lambda u: a.T @ u, 30, seed=1)
        true = np.linalg.svd(a, compute_uv=False)[0] ** 2
        assert est == pytest.approx(true, rel=1e-6)


def test_power_iteration_zero_map():
    assert power_iteration_sq_norm(lambda v: 0.0 * v, lambda u: 0.0 * u, 8) == 0.0


def test_lasso_identity_lam_zero_recovers_exactly():
    op = make_operator("identity", SHAPE)
    x = np.random.default_rng(5).normal(size=SHAPE)
    sol = lasso_dct_solve(op, x.reshape(-1), lam=0.0, max_iters=2000, tol=1e-14)
    np.testing.assert_allclose(sol.x_hat, x, atol=1e-6)
    assert sol.objective < 1e-10


@pytest.mark.parametrize("lam", [0.01, 0.1, 0.5])
def test_lasso_identity_closed_form(lam):
    # A = I: the solution is soft_threshold(dct2(y), lam/2)
    basis = DctBasis(SHAPE)
    op = make_operator("identity", SHAPE)
    y = np.random.default_rng(6).normal(size=SHAPE).reshape(-1)
    sol = lasso_dct_solve(op, y, lam=lam, max_iters=4000, tol=1e-14)
    closed = soft_threshold(basis.analyze_flat(y), lam / 2.0)
    assert np.max(np.abs(sol.z_hat - closed)) < 1e-6


def test_lasso_two_sparse_support_vs_bruteforce():
    # n=16 (4x4), m=12 gaussian, sigma=0: exact support recovery, coefficients
    # within 1e-2, against exhaustive least squares over all 2-sparse supports
    from itertools import combinations

    shape = (1, 4, 4)
    basis = DctBasis(shape)
    rng = np.random.default_rng(7)
    for trial in range(5):
        z_true = np.zeros(16)
        support = sorted(rng.choice(16, size=2, replace=False))
        z_true[support] = rng.uniform(1.0, 2.0, size=2) * rng.choice([-1.0, 1.0], 2)
        x = basis.synthesize_flat(z_true)
        op = make_operator("gaussian", shape, m=12, seed=100 + trial)
        y = measure(x, op, sigma=0.0).y

        # acceleration reaches the same minimizer; plain ISTA needs ~100k
        # iterations at this tiny lam because near-nullspace coordinates
        # shrink by only lam/L per step
        sol = lasso_dct_solve(op, y, lam=1e-4, max_iters=30000, tol=0.0, accelerate=True)
        got_support = sorted(np.flatnonzero(np.abs(sol.z_hat) > 1e-4).tolist())

        # brute-force oracle: least squares on every 2-subset of coefficients
        best_resid, best_support = np.inf, None
        for cand in combinations(range(16), 2):
            cols = np.column_stack(
                [op.apply_array(basis.synthesize_flat(np.eye(16)[j])) for j in cand]
            )
            coef, *_ = np.linalg.lstsq(cols, y, rcond=None)
            resid = np.linalg.norm(cols @ coef - y)
            if resid < best_resid:
                best_resid, best_support = resid, sorted(cand)

        assert best_support == support, "oracle should identify the planted support"
        assert got_support == support
        assert np.max(np.abs(sol.z_hat[support] - z_true[support])) < 1e-2


def test_lasso_objective_monotone_and_bounded():
    op = make_operator("gaussian", SHAPE, m=64, seed=8)
    x = np.random.default_rng(9).normal(size=SHAPE).reshape(-1)
    y = measure(x, op, sigma=0.05, seed=1).y
    sol = lasso_dct_solve(op, y, lam=0.01, max_iters=300)
    diffs = np.diff(sol.objectives)
    assert np.all(diffs <= 1e-9)
    assert sol.objective <= float(y @ y) + 1e-12  # never worse than z = 0


def test_fista_reaches_similar_objective():
    op = make_operator("gaussian", SHAPE, m=64, seed=10)
    x = np.random.default_rng(11).normal(size=SHAPE).reshape(-1)
    y = measure(x, op, sigma=0.0).y
    ista = lasso_dct_solve(op, y, lam=0.01, max_iters=800, tol=0.0)
    fista = lasso_dct_solve(op, y, lam=0.01, max_iters=800, tol=0.0, accelerate=True)
    assert fista.objective <= ista.objective * 1.01


def test_lasso_rejects_negative_lam():
    op = make_operator("identity", SHAPE)
    with pytest.raises(ValueError):
        lasso_dct_solve(op, np.zeros(op.m), lam=-1.0)
