"""Synthetic multiband scenes with known reference masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from caextract.raster import LabelGrid, Raster


def disk_mask(shape: tuple[int, int], center: tuple[float, float], radius: float) -> np.ndarray:
    rows, cols = np.indices(shape)
    return (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= radius ** 2


def rect_mask(shape: tuple[int, int], top: int, left: int, height: int, width: int) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    m[top : top + height, left : left + width] = True
    return m


def line_mask(shape: tuple[int, int], start: tuple[int, int], end: tuple[int, int],
              gap: tuple[int, int] | None = None) -> np.ndarray:
    """Axis-aligned or diagonal 1-px line; ``gap`` removes pixels ``[gap[0], gap[1])`` along it."""
    (r0, c0), (r1, c1) = start, end
    n = max(abs(r1 - r0), abs(c1 - c0)) + 1
    rr = np.rint(np.linspace(r0, r1, n)).astype(int)
    cc = np.rint(np.linspace(c0, c1, n)).astype(int)
    keep = np.ones(n, dtype=bool)
    if gap is not None:
        keep[gap[0] : gap[1]] = False
    m = np.zeros(shape, dtype=bool)
    m[rr[keep], cc[keep]] = True
    return m


@dataclass
class Scene:
    raster: Raster
    reference: LabelGrid


def render(labels: np.ndarray, means: np.ndarray, noise: float, seed: int,
           pixel_size: float = 1.0) -> Raster:
    """Per-class band means plus i.i.d. Gaussian noise, clipped to [0, 1]."""
    rng = np.random.default_rng(seed)
    means = np.asarray(means, dtype=np.float64)
    data = means[labels].transpose(2, 0, 1)
    data = data + rng.normal(0.0, noise, size=data.shape)
    return Raster(np.clip(data, 0.0, 1.0), pixel_size=pixel_size)


def two_texture_scene(size: int = 64, seed: int = 0, bands: int = 3,
                      noise: float = 0.08, pixel_size: float = 1.0) -> Scene:
    """Disk and rectangle of one Gaussian class on a background of another."""
    rng = np.random.default_rng(seed)
    shape = (size, size)
    fg = disk_mask(shape, (size * 0.35, size * 0.35), size * 0.2)
    fg |= rect_mask(shape, int(size * 0.6), int(size * 0.55), int(size * 0.25), int(size * 0.3))
    labels = fg.astype(np.int64)
    base = rng.uniform(0.25, 0.35, size=bands)
    means = np.vstack([base, base + rng.uniform(0.3, 0.4, size=bands)])
    return Scene(render(labels, means, noise, seed + 1, pixel_size), LabelGrid(labels, k=2))


def shapes_scene(size: int = 64, seed: int = 0, n_disks: int = 2, n_rects: int = 1,
                 bands: int = 3, noise: float = 0.03, pixel_size: float = 1.0) -> Scene:
    """Non-overlapping bright disks and rectangles on a dark background."""
    rng = np.random.default_rng(seed)
    shape = (size, size)
    fg = np.zeros(shape, dtype=bool)
    placed = 0
    attempts = 0
    while placed < n_disks + n_rects and attempts < 500:
        attempts += 1
        if placed < n_disks:
            r = int(rng.integers(4, max(5, size // 8)))
            c = rng.integers(r + 2, size - r - 2, size=2)
            m = disk_mask(shape, (int(c[0]), int(c[1])), r)
        else:
            h, w = rng.integers(5, max(6, size // 4), size=2)
            top = int(rng.integers(2, size - h - 2))
            left = int(rng.integers(2, size - w - 2))
            m = rect_mask(shape, top, left, int(h), int(w))
        # keep a 2-pixel moat between objects so their outlines stay apart
        halo = binary_dilation(m, structure=np.ones((5, 5), dtype=bool))
        if np.any(halo & fg):
            continue
        fg |= m
        placed += 1
    labels = fg.astype(np.int64)
    means = np.vstack([np.full(bands, 0.15), np.full(bands, 0.85)])
    return Scene(render(labels, means, noise, seed + 1, pixel_size), LabelGrid(labels, k=2))


SCENES = {"two-texture": two_texture_scene, "shapes": shapes_scene}
