"""Sparsity baseline: Lasso over an orthonormal 2-D DCT basis.

Solves min_z ||y - A Phi z||^2 + lam * ||z||_1 by proximal gradient (ISTA),
where Phi is the inverse DCT as a linear map on flattened images. ISTA is
the asserted, monotone path; FISTA is available as a flag for speed but
carries no monotonicity guarantee. The step size comes from a power-iteration
estimate of the spectral norm of A Phi.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from gencut.sensing import MeasurementOperator

__all__ = [
    "DctBasis",
    "LassoSolution",
    "soft_threshold",
    "power_iteration_sq_norm",
    "lasso_dct_solve",
]


def _dct_matrix(n: int) -> np.ndarray:
    """Orthonormal type-II DCT matrix: D[k, i] = s_k cos(pi (2i+1) k / (2n))."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    mat[0] *= np.sqrt(1.0 / n)
    mat[1:] *= np.sqrt(2.0 / n)
    return mat


class DctBasis:
    """Separable orthonormal 2-D DCT per channel on (C, H, W) images."""

    def __init__(self, image_shape: tuple[int, int, int]):
        self.image_shape = tuple(image_shape)
        c, h, w = self.image_shape
        self._dh = _dct_matrix(h)
        self._dw = _dct_matrix(w)
        self.n = prod(self.image_shape)

    def dct2(self, x: np.ndarray) -> np.ndarray:
        """Image -> coefficients (same shape)."""
        x = np.asarray(x, dtype=np.float64).reshape(self.image_shape)
        return np.einsum("hk,ckl,wl->chw", self._dh, x, self._dw)

    def idct2(self, z: np.ndarray) -> np.ndarray:
        """Coefficients -> image; exact inverse of dct2."""
        z = np.asarray(z, dtype=np.float64).reshape(self.image_shape)
        return np.einsum("kh,ckl,lw->chw", self._dh, z, self._dw)

    def synthesize_flat(self, z_flat: np.ndarray) -> np.ndarray:
        return self.idct2(z_flat).reshape(self.n)

    def analyze_flat(self, x_flat: np.ndarray) -> np.ndarray:
        return self.dct2(x_flat).reshape(self.n)


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Componentwise sign(v) * max(|v| - t, 0); the prox of t*||.||_1."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def power_iteration_sq_norm(
    matvec, rmatvec, dim: int, seed: int = 0, max_iters: int = 200, tol: float = 1e-10
) -> float:
    """Largest squared singular value of a linear map given by mat/rmat products.

    If the iteration has not settled after ``max_iters`` rounds, the current
    estimate is inflated by a 1.1 safety factor so downstream step sizes stay
    conservative.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iters):
        w = rmatvec(matvec(v))
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        new_est = nw  # Rayleigh quotient of A^T A at unit v
        v = w / nw
        if est > 0 and abs(new_est - est) <= tol * est:
            return new_est
        est = new_est
    return 1.1 * est


@dataclass
class LassoSolution:
    z_hat: np.ndarray  # DCT coefficients, flat
    x_hat: np.ndarray  # image (C, H, W)
    objective: float
    objectives: np.ndarray  # per-iteration trace
    iterations: int
    step_size: float


def lasso_dct_solve(
    op: MeasurementOperator,
    y: np.ndarray,
    lam: float = 0.01,
    max_iters: int = 500,
    tol: float = 1e-8,
    accelerate: bool = False,
    seed: int = 0,
) -> LassoSolution:
    """Proximal-gradient solution of the DCT-domain lasso.

    ISTA update: z <- soft_threshold(z - (1/L) * 2 Phi^T A^T (A Phi z - y),
    lam / L) with L = 2 * sigma_max(A Phi)^2. The objective is non-increasing
    at every ISTA iteration (checked); stops early when the relative
    objective change drops below ``tol``. ``accelerate`` switches to FISTA,
    which is faster but not monotone.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    basis = DctBasis(op.image_shape)
    y = np.asarray(y, dtype=np.float64).reshape(op.m)

    def forward(z):
        return op.apply_array(basis.synthesize_flat(z))

    def adjoint(r):
        return basis.analyze_flat(op.adjoint_array(r))

    lip = 2.0 * power_iteration_sq_norm(forward, adjoint, basis.n, seed=seed)
    if lip == 0.0:
        raise ValueError("operator is identically zero")
    step = 1.0 / lip

    def objective(z):
        r = forward(z) - y
        return float(r @ r + lam * np.abs(z).sum())

    z = np.zeros(basis.n)
    obj = objective(z)
    trace = [obj]
    zv = z  # FISTA extrapolation point
    t_accel = 1.0
    for it in range(max_iters):
        point = zv if accelerate else z
        grad = 2.0 * adjoint(forward(point) - y)
        z_new = soft_threshold(point - step * grad, lam * step)
        obj_new = objective(z_new)
        if not accelerate and obj_new > obj + 1e-12 * max(1.0, abs(obj)):
            raise AssertionError(
                f"ISTA objective increased at iteration {it}: {obj:.12g} -> {obj_new:.12g}"
            )
        if accelerate:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_accel * t_accel))
            zv = z_new + ((t_accel - 1.0) / t_next) * (z_new - z)
            t_accel = t_next
        converged = abs(obj - obj_new) <= tol * max(1.0, abs(obj))
        z, obj = z_new, obj_new
        trace.append(obj)
        if converged and it > 0:
            break
    return LassoSolution(
        z_hat=z,
        x_hat=basis.idct2(z),
        objective=obj,
        objectives=np.asarray(trace),
        iterations=len(trace) - 1,
        step_size=step,
    )
