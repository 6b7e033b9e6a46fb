"""Regular 3D grids and axis-aligned voxel boxes.
"""

from typing import Tuple
import math

import attr
import numpy as np

from .errors import BoxOutOfRange, GridMismatch
from .interpolation import identity_grid


def _as_int_triple(value) -> Tuple[int, int, int]:
    return tuple(int(v) for v in value)  # type: ignore


def _as_float_triple(value) -> Tuple[float, float, float]:
    return tuple(float(v) for v in value)  # type: ignore


def _check_triple(instance, attribute, value) -> None:
    if len(value) != 3:
        raise ValueError('{} must have 3 components, got {}'.format(
            attribute.name, value
        ))


@attr.s(frozen=True, slots=True)
class Grid():
    """Voxel lattice: dims per axis, spacing (mm) and world origin (mm).

    Arrays living on a grid are indexed ``[x, y, z]``; the raw file layout
    is x fastest, then y, then z.
    """

    dims: Tuple[int, int, int] = attr.ib(converter=_as_int_triple,
                                         validator=_check_triple)
    spacing: Tuple[float, float, float] = attr.ib(
        default=(1.0, 1.0, 1.0),
        converter=_as_float_triple,
        validator=_check_triple
    )
    origin: Tuple[float, float, float] = attr.ib(
        default=(0.0, 0.0, 0.0),
        converter=_as_float_triple,
        validator=_check_triple
    )

    def __attrs_post_init__(self) -> None:
        if any(d < 1 for d in self.dims):
            raise ValueError('grid dims must be >= 1, got {}'.format(self.dims))
        if any(not s > 0 or not math.isfinite(s) for s in self.spacing):
            raise ValueError('grid spacing must be > 0, got {}'.format(
                self.spacing
            ))
        if any(not math.isfinite(o) for o in self.origin):
            raise ValueError('grid origin must be finite')


    @property
    def voxel_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]


    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.dims


    def identity_coords(self) -> np.ndarray:
        """Voxel coordinates of every lattice point, shape (3, dx, dy, dz)."""
        return identity_grid(self.dims)


    def check_same(self, other: 'Grid', what: str = 'grid') -> None:
        if self != other:
            raise GridMismatch('{} mismatch: {} vs {}'.format(
                what, self, other
            ))


    def to_dict(self):
        return {
            'dims': list(self.dims),
            'spacing': list(self.spacing),
            'origin': list(self.origin),
        }


@attr.s(frozen=True, slots=True)
class Box():
    """Axis-aligned voxel box, bounds inclusive on both ends."""

    lo: Tuple[int, int, int] = attr.ib(converter=_as_int_triple,
                                       validator=_check_triple)
    hi: Tuple[int, int, int] = attr.ib(converter=_as_int_triple,
                                       validator=_check_triple)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return _as_int_triple(h - l + 1 for l, h in zip(self.lo, self.hi))


    @property
    def slices(self) -> Tuple[slice, slice, slice]:
        return tuple(  # type: ignore
            slice(l, h + 1) for l, h in zip(self.lo, self.hi)
        )


    def check_inside(self, grid: Grid) -> None:
        for axis in range(3):
            if not 0 <= self.lo[axis] <= self.hi[axis] < grid.dims[axis]:
                raise BoxOutOfRange(
                    'box {}..{} does not fit grid dims {}'.format(
                        self.lo, self.hi, grid.dims
                    )
                )


    def union(self, other: 'Box') -> 'Box':
        return Box(
            lo=[min(a, b) for a, b in zip(self.lo, other.lo)],
            hi=[max(a, b) for a, b in zip(self.hi, other.hi)]
        )


    def subgrid(self, grid: Grid) -> Grid:
        """Grid of the cropped region, origin moved to the box corner."""
        self.check_inside(grid)
        return Grid(
            dims=self.dims,
            spacing=grid.spacing,
            origin=[o + l * s for o, l, s in zip(grid.origin,
                                                 self.lo,
                                                 grid.spacing)]
        )


    @classmethod
    def full(cls, grid: Grid) -> 'Box':
        return cls(lo=(0, 0, 0), hi=[d - 1 for d in grid.dims])
