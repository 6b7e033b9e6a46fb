"""Scalar volumes and label maps on a regular grid.
"""

from typing import Sequence, Tuple

import attr
import numpy as np

from .errors import LabelNotFound
from .grid import Grid
from .interpolation import TrilinearStencil, nearest_indices


def _frozen_array(array: np.ndarray) -> np.ndarray:
    out = np.array(array, copy=True)
    out.setflags(write=False)
    return out


@attr.s(frozen=True, eq=False)
class Volume():
    """Scalar samples on a grid.

    ``samples`` is indexed [x, y, z]; its dtype is preserved so that file
    round trips stay bit exact. Mathematics is done in float64 via
    ``as_float``.
    """

    grid: Grid = attr.ib()
    samples: np.ndarray = attr.ib(converter=_frozen_array, repr=False)

    def __attrs_post_init__(self) -> None:
        if self.samples.shape != self.grid.dims:
            raise ValueError('samples shape {} does not match grid dims {}'.format(
                self.samples.shape, self.grid.dims
            ))
        if not np.issubdtype(self.samples.dtype, np.number):
            raise ValueError('samples must be numeric')
        if np.issubdtype(self.samples.dtype, np.floating) \
                and not np.all(np.isfinite(self.samples)):
            raise ValueError('volume samples must be finite')


    def as_float(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=np.float64)


    def with_samples(self, samples: np.ndarray) -> 'Volume':
        return Volume(grid=self.grid, samples=samples)


@attr.s(frozen=True, eq=False)
class LabelMap():
    """Non-negative integer labels on a grid; label 0 is background."""

    grid: Grid = attr.ib()
    labels: np.ndarray = attr.ib(converter=_frozen_array, repr=False)
    label_set: Tuple[int, ...] = attr.ib(init=False)

    def __attrs_post_init__(self) -> None:
        if self.labels.shape != self.grid.dims:
            raise ValueError('labels shape {} does not match grid dims {}'.format(
                self.labels.shape, self.grid.dims
            ))
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError('labels must be integers, got {}'.format(
                self.labels.dtype
            ))
        if self.labels.size and self.labels.min() < 0:
            raise ValueError('labels must be non-negative')
        object.__setattr__(
            self,
            'label_set',
            tuple(int(l) for l in np.unique(self.labels))
        )


    @property
    def foreground_labels(self) -> Tuple[int, ...]:
        return tuple(l for l in self.label_set if l != 0)


    def mask(self, label: int) -> np.ndarray:
        """Boolean support of ``label``; raises if the label is absent."""
        if label not in self.label_set:
            raise LabelNotFound(label)
        return self.labels == label


    def with_labels(self, labels: np.ndarray) -> 'LabelMap':
        return LabelMap(grid=self.grid, labels=labels)


    def binary(self, label: int) -> 'LabelMap':
        """Binary map: 1 on ``label``, 0 elsewhere."""
        return LabelMap(grid=self.grid,
                        labels=self.mask(label).astype(np.uint8))


def trilinear_sample(vol: Volume,
                     p: Sequence[float]) -> float:
    """Border-clamped trilinear interpolation at one voxel coordinate."""
    coords = np.asarray(p, dtype=np.float64).reshape(3, 1)
    stencil = TrilinearStencil(coords, vol.grid.dims)
    return float(stencil.sample(vol.samples)[0])


def nearest_sample(lm: LabelMap,
                   p: Sequence[float]) -> int:
    """Label of the nearest voxel; ties round half up per axis."""
    coords = np.asarray(p, dtype=np.float64).reshape(3, 1)
    index = nearest_indices(coords, lm.grid.dims)
    return int(lm.labels[index][0])


def mask_apply(vol: Volume,
               lm: LabelMap,
               label: int) -> Volume:
    """Keeps ``vol`` where ``lm == label`` and zeroes it elsewhere."""
    vol.grid.check_same(lm.grid)
    support = lm.mask(label)
    return vol.with_samples(
        np.where(support, vol.samples, np.zeros((), dtype=vol.samples.dtype))
    )
