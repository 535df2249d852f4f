from __future__ import annotations

import numpy as np


def normalize_unit_sphere(points: np.ndarray) -> np.ndarray:
    """Center on the centroid and scale so the farthest point has norm 1."""
    points = np.asarray(points, dtype=np.float64)
    centered = points - points.mean(axis=0)
    scale = np.sqrt((centered ** 2).sum(axis=1)).max()
    return centered / scale if scale > 0 else centered


def augment(points: np.ndarray, seed, scale_range=(0.8, 1.25), jitter_sigma: float = 0.01,
            jitter_clip: float = 0.05, shift_range: float = 0.1) -> np.ndarray:
    """Random per-axis scaling, clipped Gaussian jitter and a global shift.

    Training only; evaluation never calls this.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    points = np.asarray(points)
    lo, hi = scale_range
    scale = rng.uniform(lo, hi, size=3)
    jitter = np.clip(jitter_sigma * rng.standard_normal(points.shape), -jitter_clip, jitter_clip)
    shift = rng.uniform(-shift_range, shift_range, size=3)
    return (points * scale + jitter + shift).astype(points.dtype, copy=False)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation matrix (from a random unit quaternion)."""
    q = rng.standard_normal(4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
