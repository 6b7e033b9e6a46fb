"""Velocity and displacement fields.

Vectors are stored in voxel units with shape (3, dx, dy, dz); component k
is the displacement along array axis k. ``Phi(x) = x + u(x)`` maps a fixed
frame voxel to a moving frame point.
"""

from typing import List, Optional, Sequence, Tuple
import logging

import attr
import numpy as np

from .errors import AllVoxelsFolded, DuplicateLabel, MissingRegionField
from .grid import Grid
from .interpolation import TrilinearStencil, identity_grid, nearest_indices
from .volume import LabelMap, Volume


logger = logging.getLogger(__name__)

JACOBIAN_EPS = 1e-9


def _frozen_vectors(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@attr.s(frozen=True, eq=False)
class _VectorField():
    grid: Grid = attr.ib()
    vectors: np.ndarray = attr.ib(converter=_frozen_vectors, repr=False)

    def __attrs_post_init__(self) -> None:
        if self.vectors.shape != (3,) + self.grid.dims:
            raise ValueError('vectors shape {} does not match grid dims {}'.format(
                self.vectors.shape, self.grid.dims
            ))
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError('field vectors must be finite')


    @classmethod
    def zeros(cls, grid: Grid):
        return cls(grid=grid, vectors=np.zeros((3,) + grid.dims))


    @classmethod
    def constant(cls, grid: Grid, vector: Sequence[float]):
        vectors = np.empty((3,) + grid.dims)
        vectors[:] = np.asarray(vector, dtype=np.float64).reshape(3, 1, 1, 1)
        return cls(grid=grid, vectors=vectors)


class VelocityField(_VectorField):
    """Stationary velocity field."""


class DisplacementField(_VectorField):
    """Displacement u of the map Phi(x) = x + u(x)."""


class IntegrationTape():
    """Forward intermediates of scaling-and-squaring kept for the adjoint."""

    def __init__(self,
                 steps: int,
                 states: List[np.ndarray],
                 stencils: List[TrilinearStencil]) -> None:
        self.steps = steps
        self.states = states
        self.stencils = stencils


def scaling_and_squaring(v: np.ndarray,
                         steps: int,
                         keep_tape: bool = False
                         ) -> Tuple[np.ndarray, Optional[IntegrationTape]]:
    """Integrates raw velocity vectors (3, dx, dy, dz).

    u_0 = v / 2^steps; u_{k+1}(x) = u_k(x) + u_k(x + u_k(x)).
    """
    if steps < 1:
        raise ValueError('integration steps must be >= 1')
    shape = v.shape[1:]
    identity = identity_grid(shape)
    u = np.asarray(v, dtype=np.float64) / (2.0 ** steps)
    states: List[np.ndarray] = []
    stencils: List[TrilinearStencil] = []
    for _ in range(steps):
        stencil = TrilinearStencil(identity + u, shape)
        if keep_tape:
            states.append(u)
            stencils.append(stencil)
        u = u + np.stack([stencil.sample(u[k]) for k in range(3)])
    tape = IntegrationTape(steps, states, stencils) if keep_tape else None
    return u, tape


def scaling_and_squaring_adjoint(grad_u: np.ndarray,
                                 tape: IntegrationTape) -> np.ndarray:
    """Reverse-mode adjoint of ``scaling_and_squaring`` w.r.t. velocity."""
    g = np.asarray(grad_u, dtype=np.float64)
    for u, stencil in zip(reversed(tape.states), reversed(tape.stencils)):
        # u_next = u + sample(u, x + u): value path and coordinate path
        g_prev = g.copy()
        for k in range(3):
            g_prev[k] += stencil.scatter(g[k])
        g_prev += stencil.coord_vjp([(u[k], g[k]) for k in range(3)])
        g = g_prev
    return g / (2.0 ** tape.steps)


class WarpChain():
    """Velocity -> displacement -> warped images, with the reverse pass.

    One forward evaluation shares a single integration tape and a single
    warp stencil between every image warped by the same velocity.
    """

    def __init__(self,
                 velocity: np.ndarray,
                 steps: int) -> None:
        """Constructor."""
        self.displacement, self._tape = scaling_and_squaring(
            velocity, steps, keep_tape=True
        )
        shape = velocity.shape[1:]
        self._stencil = TrilinearStencil(identity_grid(shape) + self.displacement,
                                         shape)


    def warp(self, array: np.ndarray) -> np.ndarray:
        return self._stencil.sample(array)


    def backward(self,
                 grads: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        """Gradient w.r.t. velocity.

        ``grads`` pairs each moving-frame image with the gradient of the loss
        w.r.t. its warped samples.
        """
        g_u = self._stencil.coord_vjp(grads)
        return scaling_and_squaring_adjoint(g_u, self._tape)


def integrate_velocity(v: VelocityField,
                       steps: int) -> DisplacementField:
    """Time-1 flow of a stationary velocity field by scaling and squaring."""
    u, _ = scaling_and_squaring(v.vectors, steps)
    return DisplacementField(grid=v.grid, vectors=u)


def warp_stencil(u: DisplacementField) -> TrilinearStencil:
    return TrilinearStencil(u.grid.identity_coords() + u.vectors, u.grid.dims)


def warp_volume(vol: Volume,
                u: DisplacementField) -> Volume:
    """Resamples ``vol`` at x + u(x) with border-clamped trilinear sampling."""
    vol.grid.check_same(u.grid)
    stencil = warp_stencil(u)
    return Volume(grid=vol.grid, samples=stencil.sample(vol.samples))


def warp_labelmap(lm: LabelMap,
                  u: DisplacementField) -> LabelMap:
    """Nearest-neighbour warp of a label map."""
    lm.grid.check_same(u.grid)
    index = nearest_indices(u.grid.identity_coords() + u.vectors, lm.grid.dims)
    return LabelMap(grid=lm.grid, labels=lm.labels[index])


def compose_fields(fields: Sequence[Tuple[int, DisplacementField]],
                   fixed_seg: LabelMap) -> DisplacementField:
    """Discontinuity-preserving composition.

    Each voxel takes the vector of the field belonging to its fixed
    segmentation label; the masks partition the grid so nothing is blended.
    """
    by_label = {}
    for label, field in fields:
        if label in by_label:
            raise DuplicateLabel(label)
        field.grid.check_same(fixed_seg.grid)
        by_label[label] = field
    for label in fixed_seg.label_set:
        if label not in by_label:
            raise MissingRegionField(label)

    vectors = np.zeros((3,) + fixed_seg.grid.dims)
    for label in fixed_seg.label_set:
        support = fixed_seg.labels == label
        vectors[:, support] = by_label[label].vectors[:, support]
    return DisplacementField(grid=fixed_seg.grid, vectors=vectors)


def jacobian_determinant(u: DisplacementField) -> Volume:
    """det(I + grad u) with central differences, one-sided at borders.

    Size-1 axes contribute a zero derivative.
    """
    dims = u.grid.dims
    jac = np.zeros((3, 3) + dims)
    for k in range(3):
        for axis in range(3):
            if dims[axis] >= 2:
                jac[k, axis] = np.gradient(u.vectors[k], axis=axis)
        jac[k, k] += 1.0
    det = (
        jac[0, 0] * (jac[1, 1] * jac[2, 2] - jac[1, 2] * jac[2, 1])
        - jac[0, 1] * (jac[1, 0] * jac[2, 2] - jac[1, 2] * jac[2, 0])
        + jac[0, 2] * (jac[1, 0] * jac[2, 1] - jac[1, 1] * jac[2, 0])
    )
    return Volume(grid=u.grid, samples=det)


def log_jacobian_stats(jac: Volume,
                       mask: Optional[np.ndarray] = None,
                       exclude_folded: bool = False) -> Tuple[float, int]:
    """Standard deviation of log J and the number of clamped voxels.

    By default J is clamped at ``JACOBIAN_EPS`` before the log; with
    ``exclude_folded`` the non-positive voxels are dropped instead.
    """
    values = jac.as_float()
    if mask is not None:
        values = values[mask]
    else:
        values = values.ravel()
    positive = values > JACOBIAN_EPS
    if not np.any(positive):
        raise AllVoxelsFolded(
            'no voxel among {} has J > {}'.format(values.size, JACOBIAN_EPS)
        )
    clamped = int(values.size - np.count_nonzero(positive))
    if exclude_folded:
        logs = np.log(values[positive])
    else:
        logs = np.log(np.maximum(values, JACOBIAN_EPS))
    # two-pass variance
    mean = logs.sum() / logs.size
    sd = float(np.sqrt(np.sum((logs - mean) ** 2) / logs.size))
    return sd, clamped


def sdlogj(jac: Volume,
           mask: Optional[Tuple[LabelMap, int]] = None,
           exclude_folded: bool = False) -> float:
    """Standard deviation of the log Jacobian determinant."""
    support = None
    if mask is not None:
        lm, label = mask
        jac.grid.check_same(lm.grid)
        support = lm.mask(label)
    sd, clamped = log_jacobian_stats(jac, support, exclude_folded)
    if clamped:
        logger.debug('sdlogj clamped %d non-positive Jacobian voxels', clamped)
    return sd


def folding_count(jac: Volume) -> int:
    """Number of voxels with J <= 0."""
    return int(np.count_nonzero(jac.as_float() <= 0.0))
