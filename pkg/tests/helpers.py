"""Shared test utilities: finite differences and small random inputs."""

from typing import Callable

import numpy as np

from segreg.core.grid import Grid
from segreg.core.volume import LabelMap, Volume


FD_STEP = 1e-4


def central_difference(f: Callable[[np.ndarray], float],
                       x: np.ndarray,
                       step: float = FD_STEP) -> np.ndarray:
    """Gradient of a scalar function by central differences, one entry at a time."""
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        original = x[index]
        x[index] = original + step
        plus = f(x)
        x[index] = original - step
        minus = f(x)
        x[index] = original
        grad[index] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray,
                   numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def random_volume(rng: np.random.Generator,
                  dims=(6, 6, 6)) -> Volume:
    return Volume(grid=Grid(dims=dims), samples=rng.random(dims))


def random_labels(rng: np.random.Generator,
                  dims=(8, 8, 8),
                  n_labels: int = 3) -> LabelMap:
    return LabelMap(grid=Grid(dims=dims),
                    labels=rng.integers(0, n_labels, size=dims))


def offset_velocity(rng: np.random.Generator,
                    dims=(6, 6, 6)) -> np.ndarray:
    """Velocity with components in [0.2, 0.4], one random sign per axis.

    Sample coordinates then stay away from lattice planes, where trilinear
    interpolation has kinks that finite differences cannot resolve.
    """
    magnitude = rng.uniform(0.2, 0.4, size=(3,) + tuple(dims))
    sign = np.where(rng.random(3) < 0.5, -1.0, 1.0).reshape(3, 1, 1, 1)
    return magnitude * sign


def box_labels(dims, lo, hi, label: int = 1) -> np.ndarray:
    labels = np.zeros(dims, dtype=np.int64)
    labels[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = label
    return labels
