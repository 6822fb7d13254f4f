"""Operator construction, statistics, linearity, adjoints, and the noise rule."""

import numpy as np
import pytest

from gencut.autodiff import Tensor
from gencut.sensing import (
    Measurement,
    make_operator,
    measure,
    noise_sigma,
    operator_from_descriptor,
)

SHAPE = (1, 32, 32)
N = 1024


def test_identity_applies_unchanged():
    op = make_operator("identity", SHAPE)
    x = np.random.default_rng(0).normal(size=N)
    np.testing.assert_array_equal(op.apply_array(x), x)
    assert op.m == N


def test_gaussian_entry_statistics():
    # mean within 3 sigma of 0, per-entry variance within 5% of 1/m
    m, n = 1000, N
    op = make_operator("gaussian", SHAPE, m=m, seed=5)
    entries = op._matrix.ravel()
    se = 1.0 / np.sqrt(m * n)  # std of the sample mean of m*n entries
    assert abs(entries.mean()) < 3 * se
    assert abs(entries.var() * m - 1.0) < 0.05


def test_inpainting_floor_rounding():
    op = make_operator("inpainting", SHAPE, keep_fraction=0.10, seed=1)
    assert op.m == int(np.floor(0.10 * N)) == 102
    x = np.arange(N, dtype=float)
    kept = op.apply_array(x)
    assert kept.shape == (102,)
    assert set(kept).issubset(set(x))


def test_superres_block_average():
    op = make_operator("superres", SHAPE, factor=2)
    assert op.m == N // 4
    x = np.arange(N, dtype=float).reshape(SHAPE)
    out = op.apply_array(x)
    manual = x.reshape(1, 16, 2, 16, 2).mean(axis=(2, 4)).reshape(-1)
    np.testing.assert_allclose(out, manual, rtol=0, atol=1e-12)


def test_superres_factor_must_divide():
    with pytest.raises(ValueError, match="divide"):
        make_operator("superres", (1, 30, 30), factor=4)


def test_operator_linearity():
    rng = np.random.default_rng(3)
    for kind, kwargs in [
        ("gaussian", {"m": 64}),
        ("inpainting", {"m": 200}),
        ("superres", {"factor": 4}),
        ("identity", {}),
    ]:
        op = make_operator(kind, SHAPE, seed=2, **kwargs)
        x, y = rng.normal(size=N), rng.normal(size=N)
        a, b = 1.7, -0.3
        lhs = op.apply_array(a * x + b * y)
        rhs = a * op.apply_array(x) + b * op.apply_array(y)
        assert np.max(np.abs(lhs - rhs)) < 1e-10, kind


def test_operator_adjoint_identity():
    rng = np.random.default_rng(4)
    for kind, kwargs in [
        ("gaussian", {"m": 64}),
        ("inpainting", {"m": 200}),
        ("superres", {"factor": 2}),
        ("identity", {}),
    ]:
        op = make_operator(kind, SHAPE, seed=9, **kwargs)
        x = rng.normal(size=N)
        u = rng.normal(size=op.m)
        lhs = float(op.apply_array(x) @ u)
        rhs = float(x @ op.adjoint_array(u))
        assert abs(lhs - rhs) / max(1.0, abs(lhs)) < 1e-12, kind


def test_gaussian_regeneration_bit_identical():
    a = make_operator("gaussian", SHAPE, m=50, seed=77)
    b = operator_from_descriptor(a.descriptor())
    assert np.array_equal(a._matrix, b._matrix)


def test_apply_participates_in_gradients():
    op = make_operator("gaussian", SHAPE, m=16, seed=0)
    x = Tensor(np.random.default_rng(1).normal(size=N), requires_grad=True)
    out = op.apply(x)
    (out * Tensor(np.ones(16))).sum().backward()
    np.testing.assert_allclose(x.grad, op.adjoint_array(np.ones(16)), atol=1e-12)


def test_measure_noiseless_is_exact():
    op = make_operator("gaussian", SHAPE, m=32, seed=0)
    x = np.random.default_rng(2).normal(size=N)
    meas = measure(x, op, sigma=0.0)
    np.testing.assert_array_equal(meas.y, op.apply_array(x))

    ident = make_operator("identity", SHAPE)
    np.testing.assert_array_equal(measure(x, ident, 0.0).y, x)


def test_measure_noise_energy():
    # E||y - Ax||^2 ~= m sigma^2 within 10% over 1000 seeds
    op = make_operator("gaussian", SHAPE, m=64, seed=0)
    x = np.random.default_rng(3).normal(size=N)
    clean = op.apply_array(x)
    sigma = 0.25
    energies = []
    for seed in range(1000):
        y = measure(x, op, sigma, seed=seed).y
        energies.append(((y - clean) ** 2).sum())
    expected = op.m * sigma * sigma
    assert abs(np.mean(energies) - expected) / expected < 0.10


def test_invalid_dims_rejected():
    with pytest.raises(ValueError):
        make_operator("gaussian", SHAPE, m=0)
    with pytest.raises(ValueError):
        make_operator("gaussian", SHAPE, m=N + 1)
    with pytest.raises(ValueError):
        make_operator("unknown", SHAPE)


# ---------------------------------------------------------------------------
# noise rule


def test_sigma_reference_size_exact():
    assert noise_sigma((1, 64, 64), 100, "gaussian") == pytest.approx(0.01)
    assert noise_sigma((1, 64, 64), 1, "gaussian") == pytest.approx(0.1)


def test_sigma_requires_references_off_size():
    with pytest.raises(ValueError, match="reference"):
        noise_sigma(SHAPE, 100, "gaussian", reference_images=None)


def test_sigma_cross_size_ratio_constant():
    # E[||eta||^2 / ||Ax||^2] at 32px matches its 64px value within 5%,
    # estimated by direct Monte Carlo with dense operators at both sizes
    rng = np.random.default_rng(11)
    from gencut.datasets import generate_synthetic_dataset

    data = generate_synthetic_dataset(120, size=32, seed=3)
    refs = data.select(family="faces")[:100]

    m32 = 102
    sig32 = noise_sigma(SHAPE, m32, "gaussian", refs)

    def mc_ratio(images, m, sigma, size, draws_a=25, draws_x=40):
        vals = []
        n = images.shape[1] * size * size if images.ndim == 4 else None
        flat = images.reshape(images.shape[0], -1)
        for a_i in range(draws_a):
            A = rng.normal(0.0, 1.0 / np.sqrt(m), (m, flat.shape[1]))
            for _ in range(draws_x):
                x = flat[rng.integers(0, flat.shape[0])]
                eta = rng.normal(0.0, sigma, m)
                vals.append((eta @ eta) / float((A @ x) @ (A @ x)))
        return float(np.mean(vals))

    ratio32 = mc_ratio(refs, m32, sig32, 32)

    refs64 = np.repeat(np.repeat(refs, 2, axis=2), 2, axis=3)
    m64 = int(np.floor(m32 * 4096 / 1024))
    sig64 = 0.1 / np.sqrt(m64)
    ratio64 = mc_ratio(refs64, m64, sig64, 64)

    assert abs(ratio32 - ratio64) / ratio64 < 0.05, (ratio32, ratio64)


def test_measurement_descriptor_roundtrip():
    op = make_operator("inpainting", SHAPE, keep_fraction=0.25, seed=6)
    x = np.random.default_rng(5).normal(size=N)
    meas = measure(x, op, sigma=0.1, seed=9)
    desc = meas.descriptor()
    op2 = operator_from_descriptor(desc["operator"])
    meas2 = measure(x, op2, desc["sigma"], seed=desc["noise_seed"])
    np.testing.assert_array_equal(meas.y, meas2.y)
