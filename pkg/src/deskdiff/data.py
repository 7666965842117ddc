"""Toy datasets with class and style labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPRITE_SHAPES = ("square", "cross", "disk")


@dataclass
class LabeledDataset:
    samples: np.ndarray
    class_ids: np.ndarray
    style_ids: np.ndarray
    metadata: dict = field(default_factory=dict)
    centers: np.ndarray | None = None

    def __post_init__(self):
        n = self.samples.shape[0]
        if self.class_ids.shape != (n,) or self.style_ids.shape != (n,):
            raise ValueError("label arrays must align with sample rows")

    def __len__(self):
        return int(self.samples.shape[0])

    def split(self, n_first: int):
        """Split rows into ``[:n_first]`` and ``[n_first:]``."""
        a = slice(0, n_first)
        b = slice(n_first, None)
        return (LabeledDataset(self.samples[a], self.class_ids[a], self.style_ids[a],
                               dict(self.metadata), self.centers),
                LabeledDataset(self.samples[b], self.class_ids[b], self.style_ids[b],
                               dict(self.metadata), self.centers))


def ring_centers(k: int, radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(k) / k
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def make_ring_mixture(n: int, k: int = 8, radius: float = 4.0, sigma: float = 0.1,
                      rng: np.random.Generator | None = None, seed: int | None = None) -> LabeledDataset:
    """``k`` isotropic Gaussian modes spaced evenly on a circle.

    Each row picks its mode uniformly at random; ``class_id`` is the mode
    index and ``style_id`` is always 0.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if k < 1:
        raise ValueError("need at least one mode")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if rng is None:
        rng = np.random.default_rng(seed)
    centers = ring_centers(k, radius)
    modes = rng.integers(0, k, size=n)
    samples = centers[modes] + sigma * rng.standard_normal((n, 2))
    meta = {"generator": "ring", "n": n, "k": k, "radius": radius, "sigma": sigma, "seed": seed}
    return LabeledDataset(samples, modes.astype(np.int64), np.zeros(n, dtype=np.int64), meta, centers)


def sprite_palette_factor(palette: int, palettes: int) -> float:
    """Intensity multiplier of palette ``p``: ``(p + 1) / palettes``."""
    return (palette + 1) / palettes


def sprite_base(shape: str, size: int = 8) -> np.ndarray:
    """Binary ``size x size`` template, symmetric about the image centre."""
    if size < 4:
        raise ValueError("sprite size must be at least 4")
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    dy, dx = yy - c, xx - c
    if shape == "square":
        half = size / 4.0
        mask = (np.abs(dy) <= half) & (np.abs(dx) <= half)
    elif shape == "cross":
        arm = max(size // 8, 1) / 2.0 + 0.5
        mask = (np.abs(dy) <= arm) | (np.abs(dx) <= arm)
    elif shape == "disk":
        mask = dy ** 2 + dx ** 2 <= (size / 2.0 - 0.5) ** 2
    else:
        raise ValueError(f"unknown sprite shape {shape!r}; expected one of {SPRITE_SHAPES}")
    return mask.astype(np.float64)


def make_sprites(n: int, shapes=SPRITE_SHAPES, palettes: int = 3, size: int = 8,
                 rng: np.random.Generator | None = None, seed: int | None = None) -> LabeledDataset:
    """Flattened grayscale sprites.

    ``class_id`` indexes ``shapes`` and ``style_id`` the palette; palette
    ``p`` scales the binary template by ``(p + 1) / palettes`` so every pixel
    lies in ``[0, 1]``.
    """
    if size < 4:
        raise ValueError("sprite size must be at least 4")
    if palettes < 1 or not shapes:
        raise ValueError("need at least one shape and one palette")
    if rng is None:
        rng = np.random.default_rng(seed)
    bases = np.stack([sprite_base(s, size).reshape(-1) for s in shapes])
    cls = rng.integers(0, len(shapes), size=n)
    pal = rng.integers(0, palettes, size=n)
    factors = (pal + 1) / palettes
    samples = bases[cls] * factors[:, None]
    meta = {"generator": "sprites", "n": n, "shapes": list(shapes), "palettes": palettes,
            "size": size, "seed": seed}
    return LabeledDataset(samples, cls.astype(np.int64), pal.astype(np.int64), meta)


def random_isometry(dim: int, ambient_dim: int, rng: np.random.Generator):
    """Random ``(basis, offset)`` with orthonormal basis rows of width ``ambient_dim``."""
    if ambient_dim < dim:
        raise ValueError("ambient dimension must be at least the data dimension")
    q, _ = np.linalg.qr(rng.standard_normal((ambient_dim, dim)))
    return q.T, rng.standard_normal(ambient_dim)


def embed_affine(x: np.ndarray, ambient_dim: int, rng: np.random.Generator):
    """Lift points into ``ambient_dim`` by a random isometry plus offset.

    Returns ``(embedded, (basis, offset))``. Distances between lifted points
    equal the original distances.
    """
    basis, offset = random_isometry(x.shape[1], ambient_dim, rng)
    return x @ basis + offset, (basis, offset)
