"""Linear measurement operators and the measurement noise model.

Operators act on flattened images (length n = C*H*W) and produce m
measurements. The Gaussian ensemble uses i.i.d. N(0, 1/m) entries stored as
a dense matrix; inpainting keeps a seeded subset of pixels; super-resolution
block-averages by an integer factor. All operators expose an exact adjoint
and participate in the autodiff graph through ``apply``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from gencut import autodiff as ad
from gencut.autodiff import Tensor

__all__ = ["MeasurementOperator", "Measurement", "make_operator", "measure", "noise_sigma"]

KINDS = ("gaussian", "inpainting", "superres", "identity")


@dataclass
class MeasurementOperator:
    kind: str
    image_shape: tuple[int, int, int]
    m: int
    seed: int = 0
    factor: int = 1
    _matrix: np.ndarray | None = field(default=None, repr=False)
    _kept: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return prod(self.image_shape)

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        """Forward map on a flat vector (or an image reshaped to one)."""
        x = np.asarray(x, dtype=np.float64).reshape(self.n)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "gaussian":
            return self._matrix @ x
        if self.kind == "inpainting":
            return x[self._kept]
        c, h, w = self.image_shape
        f = self.factor
        img = x.reshape(c, h, w)
        return img.reshape(c, h // f, f, w // f, f).mean(axis=(2, 4)).reshape(self.m)

    def adjoint_array(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).reshape(self.m)
        if self.kind == "identity":
            return u.copy()
        if self.kind == "gaussian":
            return self._matrix.T @ u
        if self.kind == "inpainting":
            out = np.zeros(self.n)
            out[self._kept] = u
            return out
        c, h, w = self.image_shape
        f = self.factor
        small = u.reshape(c, h // f, w // f)
        return (np.repeat(np.repeat(small, f, axis=1), f, axis=2) / (f * f)).reshape(self.n)

    def apply(self, x: Tensor) -> Tensor:
        """Graph-recorded forward map; the backward rule is the adjoint."""
        if x.shape != (self.n,):
            raise ad.ShapeError(f"operator expects a flat ({self.n},) input, got {x.shape}")
        return ad.graph_op(
            self.apply_array(x.data), (x,), lambda g: (self.adjoint_array(g),), f"measure_{self.kind}"
        )

    def descriptor(self) -> dict:
        """Serializable description sufficient to regenerate the operator."""
        return {
            "kind": self.kind,
            "image_shape": list(self.image_shape),
            "m": self.m,
            "seed": self.seed,
            "factor": self.factor,
        }


def make_operator(
    kind: str,
    image_shape: tuple[int, int, int],
    m: int | None = None,
    keep_fraction: float | None = None,
    factor: int | None = None,
    seed: int = 0,
) -> MeasurementOperator:
    """Construct a measurement operator; deterministic for a given seed.

    gaussian:   pass ``m`` (rows), entries drawn i.i.d. N(0, 1/m).
    inpainting: pass ``m`` or ``keep_fraction`` (kept rows = floor(frac * n)).
    superres:   pass ``factor``; it must divide both H and W; m = n / factor^2.
    identity:   no extra arguments; m = n.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}; known: {KINDS}")
    n = prod(image_shape)
    if kind == "identity":
        return MeasurementOperator("identity", image_shape, n, seed)
    if kind == "gaussian":
        if m is None or not 1 <= m <= n:
            raise ValueError(f"gaussian operator needs 1 <= m <= {n}, got {m}")
        rng = np.random.default_rng(seed)
        matrix = rng.normal(0.0, 1.0 / np.sqrt(m), (m, n))
        return MeasurementOperator("gaussian", image_shape, m, seed, _matrix=matrix)
    if kind == "inpainting":
        if m is None:
            if keep_fraction is None or not 0.0 < keep_fraction <= 1.0:
                raise ValueError("inpainting needs m or keep_fraction in (0, 1]")
            m = int(np.floor(keep_fraction * n))  # documented rounding: floor
        if not 1 <= m <= n:
            raise ValueError(f"inpainting needs 1 <= m <= {n}, got {m}")
        rng = np.random.default_rng(seed)
        kept = np.sort(rng.choice(n, size=m, replace=False))
        return MeasurementOperator("inpainting", image_shape, m, seed, _kept=kept)
    # superres
    if factor is None or factor < 1:
        raise ValueError("superres needs an integer factor >= 1")
    _, h, w = image_shape
    if h % factor or w % factor:
        raise ValueError(f"factor {factor} does not divide image extents ({h},{w})")
    m = n // (factor * factor)
    return MeasurementOperator("superres", image_shape, m, seed, factor=factor)


def operator_from_descriptor(desc: dict) -> MeasurementOperator:
    """Regenerate an operator from its descriptor (bit-identical for gaussian)."""
    kind = desc["kind"]
    shape = tuple(desc["image_shape"])
    if kind == "superres":
        return make_operator(kind, shape, factor=desc["factor"], seed=desc["seed"])
    if kind == "identity":
        return make_operator(kind, shape, seed=desc["seed"])
    return make_operator(kind, shape, m=desc["m"], seed=desc["seed"])


@dataclass
class Measurement:
    y: np.ndarray
    operator: MeasurementOperator
    sigma: float
    noise_seed: int

    def descriptor(self) -> dict:
        return {
            "operator": self.operator.descriptor(),
            "sigma": self.sigma,
            "noise_seed": self.noise_seed,
        }


def measure(x: np.ndarray, op: MeasurementOperator, sigma: float, seed: int = 0) -> Measurement:
    """y = A x + eta with eta ~ N(0, sigma^2 I_m), drawn once per instance."""
    clean = op.apply_array(x)
    if sigma > 0.0:
        clean = clean + np.random.default_rng(seed).normal(0.0, sigma, op.m)
    if not np.all(np.isfinite(clean)):
        raise ad.NonFiniteError("non-finite measurement")
    return Measurement(clean, op, float(sigma), seed)


def _expected_energy(
    kind: str, image_shape: tuple[int, int, int], m: int, images: np.ndarray, factor: int
) -> float:
    """Mean over images of E_A ||A x||^2 (expectation over the operator ensemble).

    gaussian rows have norm-1 expectation (E||Ax||^2 = ||x||^2); a uniform
    random kept-set gives (m/n) ||x||^2; identity gives ||x||^2; the
    deterministic block average is evaluated directly.
    """
    n = prod(image_shape)
    flat = images.reshape(images.shape[0], n)
    energies = (flat * flat).sum(axis=1)
    if kind in ("gaussian", "identity"):
        return float(energies.mean())
    if kind == "inpainting":
        return float((m / n) * energies.mean())
    c, h, w = image_shape
    small = flat.reshape(-1, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))
    return float((small.reshape(images.shape[0], -1) ** 2).sum(axis=1).mean())


def noise_sigma(
    image_shape: tuple[int, int, int],
    m: int,
    op: MeasurementOperator | str,
    reference_images: np.ndarray | None = None,
    ref_size: int = 64,
) -> float:
    """Noise standard deviation following the reference-size scaling rule.

    At the reference image size, sigma = 0.1/sqrt(m), i.e. E||eta||^2 = 0.01.
    At other sizes, sigma is chosen so E||eta||^2 / E||Ax||^2 matches its
    reference-size value, with E||Ax||^2 estimated over ``reference_images``
    (nearest-upsampled to the reference size for the reference-side estimate).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    kind = op if isinstance(op, str) else op.kind
    factor = 1 if isinstance(op, str) else op.factor
    c, h, w = image_shape
    if h == ref_size and w == ref_size:
        return 0.1 / np.sqrt(m)
    if reference_images is None or len(reference_images) == 0:
        raise ValueError("reference images are required away from the reference size")
    if ref_size % h or ref_size % w:
        raise ValueError(f"reference size {ref_size} must be an integer multiple of ({h},{w})")

    up = ref_size // h
    refs = np.asarray(reference_images, dtype=np.float64).reshape(-1, c, h, w)
    refs_up = np.repeat(np.repeat(refs, up, axis=2), ref_size // w, axis=3)
    ref_shape = (c, ref_size, ref_size)
    n, n_ref = prod(image_shape), prod(ref_shape)
    m_ref = max(1, int(np.floor(m * n_ref / n)))  # preserve the undersampling ratio

    e_ref = _expected_energy(kind, ref_shape, m_ref, refs_up, factor)
    e_target = _expected_energy(kind, image_shape, m, refs, factor)
    ratio_ref = 0.01 / e_ref  # m_ref * (0.1/sqrt(m_ref))^2 = 0.01
    return float(np.sqrt(ratio_ref * e_target / m))
