"""Per-region bounding boxes, cropping and re-embedding of fields.
"""

from typing import TypeVar, Union

import numpy as np

from .fields import DisplacementField, VelocityField
from .grid import Box, Grid
from .volume import LabelMap, Volume


Croppable = TypeVar('Croppable', Volume, LabelMap, VelocityField, DisplacementField)


def bounding_box(lm: LabelMap,
                 label: int,
                 margin: int = 0) -> Box:
    """Tightest box around ``label``, dilated by ``margin`` and clipped."""
    if margin < 0:
        raise ValueError('margin must be non-negative')
    support = lm.mask(label)
    coords = np.nonzero(support)
    lo = [max(0, int(c.min()) - margin) for c in coords]
    hi = [min(d - 1, int(c.max()) + margin)
          for c, d in zip(coords, lm.grid.dims)]
    return Box(lo=lo, hi=hi)


def crop(obj: Croppable,
         box: Box) -> Croppable:
    """Extracts the sub-grid covered by ``box``; the origin follows the box."""
    grid = box.subgrid(obj.grid)
    if isinstance(obj, Volume):
        return Volume(grid=grid, samples=obj.samples[box.slices])
    if isinstance(obj, LabelMap):
        return LabelMap(grid=grid, labels=obj.labels[box.slices])
    vectors = obj.vectors[(slice(None),) + box.slices]
    return type(obj)(grid=grid, vectors=vectors)


def crop_array(array: np.ndarray,
               box: Box) -> np.ndarray:
    return array[box.slices]


def uncrop_displacement(field: Union[DisplacementField, VelocityField],
                        box: Box,
                        full_grid: Grid) -> DisplacementField:
    """Embeds a cropped field into ``full_grid``; zero displacement outside."""
    box.check_inside(full_grid)
    if field.grid.dims != box.dims:
        raise ValueError('field dims {} do not match box dims {}'.format(
            field.grid.dims, box.dims
        ))
    vectors = np.zeros((3,) + full_grid.dims)
    vectors[(slice(None),) + box.slices] = field.vectors
    return DisplacementField(grid=full_grid, vectors=vectors)
