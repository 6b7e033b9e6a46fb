"""Exact Euclidean distance transforms and normalized EDT masks.
"""

from typing import Optional, Sequence

import attr
import numpy as np
from scipy import ndimage

from .grid import Grid
from .volume import LabelMap, Volume


@attr.s(frozen=True, eq=False)
class EdtMask():
    """Foreground distance-to-boundary scaled to [0, 1]; background is 0."""

    grid: Grid = attr.ib()
    values: np.ndarray = attr.ib(repr=False)

    def __attrs_post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.shape != self.grid.dims:
            raise ValueError('EDT mask shape does not match grid')
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError('EDT mask values must lie in [0, 1]')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)


    def as_volume(self) -> Volume:
        return Volume(grid=self.grid, samples=self.values)


def exact_edt(mask: np.ndarray,
              sampling: Optional[Sequence[float]] = None) -> np.ndarray:
    """Distance from each foreground voxel to the nearest background voxel.

    Voxels outside the grid count as background along every axis longer
    than one voxel, so a region touching the border gets distance 1 on its
    border voxels. Size-1 axes (2D inputs) are not padded. Background
    voxels are 0. ``sampling`` switches from voxel units to physical units.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.zeros(mask.shape)
    pad = [(1, 1) if size > 1 else (0, 0) for size in mask.shape]
    padded = np.pad(mask, pad, mode='constant', constant_values=False)
    if padded.all():
        return np.ones(mask.shape)
    dist = ndimage.distance_transform_edt(padded, sampling=sampling)
    inner = tuple(slice(before, before + size)
                  for (before, _), size in zip(pad, mask.shape))
    return np.asarray(dist[inner], dtype=np.float64)


def normalized_edt_mask(lm: LabelMap,
                        label: int,
                        use_spacing: bool = False) -> EdtMask:
    """EDT of ``lm == label`` divided by its maximum."""
    support = lm.mask(label)
    dist = exact_edt(support, lm.grid.spacing if use_spacing else None)
    top = dist.max()
    if top <= 0.0:
        return EdtMask(grid=lm.grid, values=support.astype(np.float64))
    return EdtMask(grid=lm.grid, values=dist / top)
