"""Synthetic desk-scale image datasets and PNG-folder loading.

Two procedural families stand in for an in-distribution / out-of-distribution
pair: "faces" (ellipse head, two eyes, nose, mouth, randomized geometry and
intensity) and "scenes" (random rectangles, circles, and gradients). All
images are grayscale in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Dataset", "generate_synthetic_dataset", "load_image_folder"]

SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    """Images of identical shape with a family label and a split tag each."""

    images: np.ndarray  # (N, C, H, W) float64 in [-1, 1]
    families: list[str]
    splits: list[str]

    def __post_init__(self):
        n = self.images.shape[0]
        if len(self.families) != n or len(self.splits) != n:
            raise ValueError("images, families, and splits must have equal length")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def select(self, family: str | None = None, split: str | None = None) -> np.ndarray:
        """Stack of images matching the given family and/or split."""
        keep = [
            i
            for i in range(len(self))
            if (family is None or self.families[i] == family)
            and (split is None or self.splits[i] == split)
        ]
        return self.images[keep]


def _mesh(size: int):
    coords = np.linspace(-1.0, 1.0, size)
    return np.meshgrid(coords, coords, indexing="ij")  # (yy, xx)


def _ellipse(yy, xx, cy, cx, ry, rx):
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _rot_ellipse(yy, xx, cy, cx, ry, rx, angle):
    ca, sa = np.cos(angle), np.sin(angle)
    u = ca * (xx - cx) + sa * (yy - cy)
    v = -sa * (xx - cx) + ca * (yy - cy)
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _draw_face(rng: np.random.Generator, size: int) -> np.ndarray:
    """One face: coarse geometry plus per-image detail.

    Outline wobble, hair stripes, eyebrow tilt, and freckles vary per image
    far beyond what a 32-dimensional code can memorize; they are what a
    higher-dimensional inversion has to recover from measurements.
    """
    yy, xx = _mesh(size)
    img = rng.uniform(0.1, 0.7) + rng.uniform(-0.25, 0.25) * xx + rng.uniform(-0.25, 0.25) * yy
    for _ in range(2):  # smooth background waves
        bf = rng.uniform(1.0, 3.5)
        bang = rng.uniform(0, np.pi)
        img = img + rng.uniform(0.1, 0.25) * np.sin(
            bf * (np.cos(bang) * xx + np.sin(bang) * yy) + rng.uniform(0, 2 * np.pi)
        )
    for _ in range(rng.integers(1, 3)):  # soft background blobs
        cy0, cx0 = rng.uniform(-0.9, 0.9, 2)
        img = np.where(
            _ellipse(yy, xx, cy0, cx0, rng.uniform(0.15, 0.5), rng.uniform(0.15, 0.5)),
            img + rng.uniform(-0.35, 0.35),
            img,
        )

    cy, cx = rng.uniform(-0.1, 0.1, 2)
    ry, rx = rng.uniform(0.62, 0.85), rng.uniform(0.48, 0.7)
    # head outline modulated by a random low-order Fourier series
    dist = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    theta = np.arctan2((yy - cy) / ry, (xx - cx) / rx)
    boundary = np.ones_like(dist)
    for k in range(2, 8):
        boundary += rng.uniform(-0.07, 0.07) * np.cos(k * theta + rng.uniform(0, 2 * np.pi))
    head = dist <= boundary
    shade = rng.uniform(-0.35, 0.2) + rng.uniform(-0.3, 0.3) * yy + rng.uniform(-0.2, 0.2) * xx
    # smooth per-image shading waves: low spatial frequency, outside the span
    # a 32-dim latent can memorize, yet recoverable from few measurements
    for _ in range(5):
        wf = rng.uniform(1.0, 4.0)
        wang = rng.uniform(0, np.pi)
        shade = shade + rng.uniform(0.14, 0.36) * np.sin(
            wf * (np.cos(wang) * xx + np.sin(wang) * yy) + rng.uniform(0, 2 * np.pi)
        )
    img = np.where(head, shade, img)

    # hair cap with broad smooth waves across the top of the head
    hair_line = cy - rng.uniform(0.25, 0.45) * ry
    freq = rng.uniform(4.0, 9.0)
    ang = rng.uniform(-0.8, 0.8)
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(freq * (np.cos(ang) * xx + np.sin(ang) * yy) + phase)
    dark, light = rng.uniform(-1.0, -0.75), rng.uniform(-0.55, -0.3)
    hair_vals = 0.5 * (dark + light) + 0.5 * (light - dark) * wave
    img = np.where(head & (yy < hair_line), hair_vals, img)

    # collar band below the chin with its own broad wave
    collar_top = cy + rng.uniform(0.75, 0.95) * ry
    cfreq = rng.uniform(3.0, 8.0)
    cang = rng.uniform(-0.8, 0.8)
    cwave = np.sin(cfreq * (np.cos(cang) * xx + np.sin(cang) * yy) + rng.uniform(0, 6.3))
    c_lo, c_hi = rng.uniform(-0.9, -0.4), rng.uniform(0.2, 0.8)
    img = np.where(yy > collar_top, 0.5 * (c_lo + c_hi) + 0.5 * (c_hi - c_lo) * cwave, img)

    eye_y = cy - rng.uniform(0.2, 0.32) * ry
    eye_dx = rng.uniform(0.3, 0.48) * rx
    eye_r = rng.uniform(0.07, 0.13)
    eye_val = rng.uniform(-1.0, -0.55)
    for sign in (-1.0, 1.0):
        jx, jy = rng.uniform(-0.03, 0.03, 2)
        ex = cx + sign * eye_dx + jx
        img = np.where(
            _ellipse(yy, xx, eye_y + jy, ex, eye_r, eye_r * rng.uniform(0.8, 1.3)), eye_val, img
        )
        brow = _rot_ellipse(
            yy,
            xx,
            eye_y + jy - rng.uniform(0.12, 0.2),
            ex,
            rng.uniform(0.02, 0.045),
            rng.uniform(0.1, 0.18),
            rng.uniform(-0.5, 0.5),
        )
        img = np.where(brow, rng.uniform(-0.9, -0.5), img)

    nose = _ellipse(yy, xx, cy + rng.uniform(0.05, 0.18), cx, rng.uniform(0.1, 0.2), rng.uniform(0.04, 0.09))
    img = np.where(nose, img - rng.uniform(0.1, 0.3), img)

    mouth_y = cy + rng.uniform(0.42, 0.58) * ry
    mouth = _ellipse(yy, xx, mouth_y, cx + rng.uniform(-0.05, 0.05), rng.uniform(0.05, 0.1), rng.uniform(0.18, 0.34))
    img = np.where(mouth, rng.uniform(-0.95, -0.45), img)

    for _ in range(rng.integers(0, 4)):  # a few soft freckles on the lower face
        fy = cy + rng.uniform(0.1, 0.45) * ry
        fx = cx + rng.uniform(-0.5, 0.5) * rx
        img = np.where(
            _ellipse(yy, xx, fy, fx, rng.uniform(0.03, 0.07), rng.uniform(0.03, 0.07)),
            img - rng.uniform(0.15, 0.35),
            img,
        )

    return np.clip(img, -1.0, 1.0)


def _draw_scene(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = _mesh(size)
    img = rng.uniform(-0.6, 0.6) + rng.uniform(-0.6, 0.6) * xx + rng.uniform(-0.6, 0.6) * yy
    for _ in range(rng.integers(3, 7)):
        val = rng.uniform(-1.0, 1.0)
        if rng.random() < 0.5:
            y0, x0 = rng.uniform(-1.0, 0.6, 2)
            y1 = y0 + rng.uniform(0.2, 1.0)
            x1 = x0 + rng.uniform(0.2, 1.0)
            mask = (yy >= y0) & (yy <= y1) & (xx >= x0) & (xx <= x1)
        else:
            cy, cx = rng.uniform(-0.8, 0.8, 2)
            mask = _ellipse(yy, xx, cy, cx, rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5))
        if rng.random() < 0.4:  # striped fill
            freq, ang = rng.uniform(8.0, 24.0), rng.uniform(0, np.pi)
            stripes = np.sin(freq * (np.cos(ang) * xx + np.sin(ang) * yy) + rng.uniform(0, 2 * np.pi)) > 0
            fill = np.where(stripes, val, rng.uniform(-1.0, 1.0))
        else:
            fill = val
        img = np.where(mask, fill, img)
    return np.clip(img, -1.0, 1.0)


def generate_synthetic_dataset(n: int, size: int = 32, seed: int = 0) -> Dataset:
    """Build ``n`` faces (train/val/test 80/10/10) plus ``n//4`` test-only scenes.

    Scenes never receive a train tag: they model images outside the training
    distribution. Deterministic for a given ``(n, size, seed)``.
    """
    if n < 1:
        raise ValueError("need at least one image")
    rng = np.random.default_rng(seed)
    faces = np.stack([_draw_face(rng, size) for _ in range(n)])[:, None, :, :]
    n_scenes = max(1, n // 4)
    scenes = np.stack([_draw_scene(rng, size) for _ in range(n_scenes)])[:, None, :, :]

    n_train = int(n * 0.8)
    n_val = int(n * 0.1)
    face_splits = (
        ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    )
    images = np.concatenate([faces, scenes])
    families = ["faces"] * n + ["scenes"] * n_scenes
    splits = face_splits + ["test"] * n_scenes
    return Dataset(images, families, splits)


def load_image_folder(path, size: int = 32) -> Dataset:
    """Load PNG/JPG images from a directory as a grayscale dataset.

    8-bit gray or RGB files are converted to luminance, resized to
    ``size`` x ``size``, and rescaled to [-1, 1]. Files are taken in sorted
    order and tagged train/val/test 80/10/10.
    """
    from pathlib import Path

    from PIL import Image

    files = sorted(
        p for p in Path(path).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    if not files:
        raise FileNotFoundError(f"no images found in {path}")
    images = []
    for f in files:
        with Image.open(f) as im:
            arr = np.asarray(im.convert("L").resize((size, size), Image.BILINEAR), dtype=np.float64)
        images.append(arr / 127.5 - 1.0)
    images = np.stack(images)[:, None, :, :]
    n = len(files)
    n_train, n_val = int(n * 0.8), int(n * 0.1)
    splits = ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    return Dataset(images, ["folder"] * n, splits)
