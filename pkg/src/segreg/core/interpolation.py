"""Border-clamped trilinear and nearest-neighbour sampling with adjoints.

A ``TrilinearStencil`` is built once for a set of continuous voxel
coordinates and then reused to sample any number of arrays on the same
grid, to scatter gradients back onto those arrays, and to differentiate
the samples with respect to the coordinates. Image warping, label warping
and every squaring step of velocity integration go through this one
implementation.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np


_CORNERS = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]


class TrilinearStencil():
    """Precomputed corner indices and weights for trilinear sampling.

    Coordinates outside ``[0, dim - 1]`` are clamped per axis before
    interpolation; the derivative with respect to a clamped coordinate is 0.
    Size-1 axes are never interpolated along.
    """

    __slots__ = (
        '_shape',
        '_lo',
        '_hi',
        '_frac',
        '_active',
        '_flat_index',
        '_weights',
        '_all_index',
        '_coord_weights',
        '_out_shape'
    )

    def __init__(self,
                 coords: np.ndarray,
                 shape: Sequence[int]) -> None:
        """Constructor.

        coords has shape (3, ...) in voxel units; shape is the (dx, dy, dz)
        shape of the arrays that will be sampled.
        """
        self._shape = tuple(int(s) for s in shape)
        self._out_shape = coords.shape[1:]
        self._lo: List[np.ndarray] = []
        self._hi: List[np.ndarray] = []
        self._frac: List[np.ndarray] = []
        self._active: List[np.ndarray] = []
        for axis, size in enumerate(self._shape):
            c = np.asarray(coords[axis], dtype=np.float64).ravel()
            if size == 1:
                lo = np.zeros(c.shape, dtype=np.intp)
                self._lo.append(lo)
                self._hi.append(lo)
                self._frac.append(np.zeros(c.shape))
                self._active.append(np.zeros(c.shape, dtype=bool))
                continue
            clamped = np.clip(c, 0.0, size - 1.0)
            lo = np.clip(np.floor(clamped).astype(np.intp), 0, size - 2)
            self._lo.append(lo)
            self._hi.append(lo + 1)
            self._frac.append(clamped - lo)
            self._active.append((c >= 0.0) & (c <= size - 1.0))

        dy, dz = self._shape[1], self._shape[2]
        self._flat_index = []
        self._weights = []
        for (a, b, c) in _CORNERS:
            ix = self._hi[0] if a else self._lo[0]
            iy = self._hi[1] if b else self._lo[1]
            iz = self._hi[2] if c else self._lo[2]
            self._flat_index.append((ix * dy + iy) * dz + iz)
            self._weights.append(
                self._axis_weight(0, a)
                * self._axis_weight(1, b)
                * self._axis_weight(2, c)
            )
        self._all_index = np.concatenate(self._flat_index)
        self._coord_weights: Optional[List[List[np.ndarray]]] = None


    def _axis_weight(self, axis: int, upper: int) -> np.ndarray:
        t = self._frac[axis]
        return t if upper else 1.0 - t


    @property
    def out_shape(self) -> Tuple[int, ...]:
        return self._out_shape


    def sample(self, array: np.ndarray) -> np.ndarray:
        """Interpolates ``array`` (shape = stencil grid) at the coordinates."""
        flat = np.asarray(array).reshape(-1)
        out = np.zeros(self._flat_index[0].shape, dtype=np.float64)
        for index, weight in zip(self._flat_index, self._weights):
            out += weight * flat[index]
        return out.reshape(self._out_shape)


    def scatter(self, grad: np.ndarray) -> np.ndarray:
        """Adjoint of ``sample`` with respect to the sampled array."""
        g = np.asarray(grad, dtype=np.float64).reshape(-1)
        size = self._shape[0] * self._shape[1] * self._shape[2]
        weights = np.concatenate([weight * g for weight in self._weights])
        out = np.bincount(self._all_index, weights=weights, minlength=size)
        return out.reshape(self._shape)


    def _derivative_weights(self) -> List[List[np.ndarray]]:
        # [axis][corner]: signed product of the other two axis weights
        if self._coord_weights is None:
            table = []
            for axis in range(3):
                row = []
                for corner in _CORNERS:
                    weight = np.where(self._active[axis],
                                      1.0 if corner[axis] else -1.0, 0.0)
                    for other in range(3):
                        if other != axis:
                            weight = weight * self._axis_weight(other, corner[other])
                    row.append(weight)
                table.append(row)
            self._coord_weights = table
        return self._coord_weights


    def coord_gradient(self, array: np.ndarray) -> np.ndarray:
        """Derivative of the samples with respect to each coordinate.

        Returns shape (3, ...): entry [k] is d sample / d coord_k.
        """
        flat = np.asarray(array).reshape(-1)
        grads = []
        for row in self._derivative_weights():
            acc = np.zeros(self._flat_index[0].shape, dtype=np.float64)
            for weight, index in zip(row, self._flat_index):
                acc += weight * flat[index]
            grads.append(acc.reshape(self._out_shape))
        return np.stack(grads)


    def coord_vjp(self,
                  pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        """Sum over ``(array, grad)`` of grad * coord_gradient(array).

        The arrays are gathered once per corner and contracted with their
        gradients before the derivative weights are applied.
        """
        corner_sums = []
        for index in self._flat_index:
            acc = np.zeros(index.shape, dtype=np.float64)
            for array, grad in pairs:
                acc += np.asarray(grad, dtype=np.float64).reshape(-1) \
                    * np.asarray(array).reshape(-1)[index]
            corner_sums.append(acc)
        out = np.zeros((3,) + self._flat_index[0].shape, dtype=np.float64)
        for axis, row in enumerate(self._derivative_weights()):
            for weight, corner_sum in zip(row, corner_sums):
                out[axis] += weight * corner_sum
        return out.reshape((3,) + tuple(self._out_shape))

def nearest_indices(coords: np.ndarray,
                    shape: Sequence[int]) -> Tuple[np.ndarray, ...]:
    """Clamped round-half-up voxel indices for nearest-neighbour lookup."""
    out = []
    for axis, size in enumerate(shape):
        c = np.clip(np.asarray(coords[axis], dtype=np.float64), 0.0, size - 1.0)
        out.append(np.floor(c + 0.5).astype(np.intp))
    return tuple(out)


def identity_grid(shape: Sequence[int]) -> np.ndarray:
    """Voxel coordinates of every lattice point, shape (3,) + shape."""
    return np.stack(np.meshgrid(
        *(np.arange(d, dtype=np.float64) for d in shape),
        indexing='ij'
    ))
