"""Synthetic phantoms with piecewise-smooth, discontinuous ground truth.

The fixed frame is built first; the moving frame is obtained by moving each
region with its ground-truth transform, so the ground-truth map
``Phi(x) = x + u(x)`` is exact in the fixed frame.
"""

from typing import Dict, Optional, Tuple
import logging

import attr
import numpy as np
from scipy import ndimage

from segreg.core.errors import SpecInfeasible
from segreg.core.fields import DisplacementField, compose_fields
from segreg.core.grid import Grid
from segreg.core.interpolation import TrilinearStencil, identity_grid, nearest_indices
from segreg.core.metrics import nearest_rank
from segreg.core.volume import LabelMap, Volume

from .spec import PhantomSpec


logger = logging.getLogger(__name__)

TEXTURE_AMPLITUDE = 0.15
ERODE_VOXELS = 2


@attr.s(frozen=True, eq=False)
class Phantom():
    spec: PhantomSpec = attr.ib()
    moving: Volume = attr.ib(repr=False)
    fixed: Volume = attr.ib(repr=False)
    moving_seg: LabelMap = attr.ib(repr=False)
    fixed_seg: LabelMap = attr.ib(repr=False)
    gt_fields: Dict[int, DisplacementField] = attr.ib(repr=False)

    @property
    def gt_field(self) -> DisplacementField:
        """Ground-truth fields composed by the fixed segmentation."""
        return compose_fields(sorted(self.gt_fields.items()), self.fixed_seg)


def _inner_block(dims: Tuple[int, ...]) -> Tuple[slice, ...]:
    return tuple(slice(d // 4, 3 * d // 4) if d >= 4 else slice(0, d)
                 for d in dims)


def _ellipsoid(dims: Tuple[int, ...],
               center: np.ndarray,
               scale: float) -> np.ndarray:
    coords = identity_grid(dims)
    total = np.zeros(dims)
    for axis, d in enumerate(dims):
        if d < 2:
            continue
        radius = max(scale * d, 0.5)
        total += ((coords[axis] - center[axis]) / radius) ** 2
    return total <= 1.0


def fixed_layout(spec: PhantomSpec) -> np.ndarray:
    """Fixed-frame labels: background 0, regions 1..n."""
    dims = spec.dims
    n = spec.n_regions
    labels = np.zeros(dims, dtype=np.int64)
    center = spec.center

    if spec.layout == 'half-spaces':
        block = _inner_block(dims)
        lo, hi = block[0].start, block[0].stop
        edges = np.linspace(lo, hi, n + 1).round().astype(int)
        for i in range(n):
            slab = list(block)
            slab[0] = slice(edges[i], edges[i + 1])
            labels[tuple(slab)] = i + 1
    elif spec.layout == 'nested-blobs':
        for i in range(n):
            # outermost shell is label 1
            labels[_ellipsoid(dims, center, 0.35 * (n - i) / n)] = i + 1
    else:
        inside = _ellipsoid(dims, center, 0.35)
        rng = np.random.default_rng(spec.seed)
        candidates = np.argwhere(inside)
        if len(candidates) < n:
            raise SpecInfeasible('{} voronoi seeds do not fit'.format(n))
        seeds = candidates[rng.choice(len(candidates), size=n, replace=False)]
        points = np.argwhere(inside)
        dist = np.stack([np.sum((points - s) ** 2, axis=1) for s in seeds])
        labels[tuple(points.T)] = np.argmin(dist, axis=0) + 1

    missing = set(range(n + 1)) - set(np.unique(labels).tolist())
    if missing - {0}:
        raise SpecInfeasible('layout leaves regions {} empty'.format(sorted(missing)))
    return labels


def gt_displacement(spec: PhantomSpec,
                    label: int) -> np.ndarray:
    """u_i(x) = (A_i - I)(x - c) + t_i on the whole grid; zero for background."""
    dims = spec.dims
    if label == 0:
        return np.zeros((3,) + dims)
    rel = identity_grid(dims) - spec.center.reshape(3, 1, 1, 1)
    linear = spec.matrix(label) - np.eye(3)
    return (np.einsum('ij,j...->i...', linear, rel)
            + spec.translation(label).reshape(3, 1, 1, 1))


def _inverse_points(spec: PhantomSpec,
                    label: int) -> np.ndarray:
    """Phi_i^{-1}(y) for every voxel y of the grid."""
    matrix = spec.matrix(label)
    det = np.linalg.det(matrix)
    if not det > 0:
        raise SpecInfeasible('transform of region {} is not orientation preserving'
                             .format(label))
    inverse = np.linalg.inv(matrix)
    center = spec.center.reshape(3, 1, 1, 1)
    rel = identity_grid(spec.dims) - center - spec.translation(label).reshape(3, 1, 1, 1)
    return np.einsum('ij,j...->i...', inverse, rel) + center


def _inside(points: np.ndarray,
            dims: Tuple[int, ...],
            tol: float = 1e-9) -> np.ndarray:
    ok = np.ones(points.shape[1:], dtype=bool)
    for axis, d in enumerate(dims):
        ok &= (points[axis] >= -tol) & (points[axis] <= d - 1 + tol)
    return ok


def _textures(spec: PhantomSpec,
              rng: np.random.Generator) -> Dict[int, np.ndarray]:
    n = spec.n_regions
    dims = spec.dims
    sigma = tuple(spec.correlation_length if d > 1 else 0.0 for d in dims)
    textures = {}
    for label in range(n + 1):
        base = 0.2 + 0.6 * label / n
        if spec.texture == 'piecewise-constant':
            textures[label] = np.full(dims, base)
            continue
        noise = ndimage.gaussian_filter(rng.standard_normal(dims), sigma, mode='wrap')
        top = np.max(np.abs(noise))
        if top > 0:
            noise = noise / top
        textures[label] = base + TEXTURE_AMPLITUDE * noise
    return textures


def make_phantom(spec: PhantomSpec) -> Phantom:
    """Builds moving/fixed images and maps plus per-region ground truth."""
    dims = spec.dims
    grid = Grid(dims=dims)
    rng = np.random.default_rng(spec.seed)
    fixed_labels = fixed_layout(spec)
    textures = _textures(spec, rng)

    gt_fields = {}
    for label in range(spec.n_regions + 1):
        u = gt_displacement(spec, label)
        if label > 0:
            support = fixed_labels == label
            mapped = identity_grid(dims)[:, support] + u[:, support]
            if not np.all(_inside(mapped, dims)):
                raise SpecInfeasible('region {} leaves the grid'.format(label))
        gt_fields[label] = DisplacementField(grid=grid, vectors=u)

    # each moving voxel is claimed by the region whose inverse map lands on it
    moving_labels = np.zeros(dims, dtype=np.int64)
    moving_samples = np.array(textures[0], copy=True)
    for label in range(1, spec.n_regions + 1):
        points = _inverse_points(spec, label)
        landing = nearest_indices(points, dims)
        claims = _inside(points, dims) & (fixed_labels[landing] == label)
        clash = claims & (moving_labels != 0)
        if np.any(clash):
            raise SpecInfeasible('regions {} and {} overlap in the moving frame'.format(
                int(moving_labels[clash][0]), label
            ))
        moving_labels[claims] = label
        stencil = TrilinearStencil(points, dims)
        moving_samples = np.where(claims, stencil.sample(textures[label]),
                                  moving_samples)

    fixed_samples = np.array(textures[0], copy=True)
    for label in range(1, spec.n_regions + 1):
        support = fixed_labels == label
        fixed_samples[support] = textures[label][support]

    if spec.noise_sigma > 0:
        fixed_samples = fixed_samples + spec.noise_sigma * rng.standard_normal(dims)
        moving_samples = moving_samples + spec.noise_sigma * rng.standard_normal(dims)

    fixed_seg = LabelMap(grid=grid, labels=fixed_labels)
    moving_seg = LabelMap(grid=grid, labels=moving_labels)
    if moving_seg.label_set != fixed_seg.label_set:
        raise SpecInfeasible('moving frame lost labels {}'.format(
            sorted(set(fixed_seg.label_set) - set(moving_seg.label_set))
        ))
    logger.info('phantom %s, %d regions, layout %s',
                dims, spec.n_regions, spec.layout)
    return Phantom(spec=spec,
                   moving=Volume(grid=grid, samples=moving_samples),
                   fixed=Volume(grid=grid, samples=fixed_samples),
                   moving_seg=moving_seg,
                   fixed_seg=fixed_seg,
                   gt_fields=gt_fields)


def gt_field_error(estimated: DisplacementField,
                   spec: PhantomSpec,
                   region: int,
                   fixed_labels: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """(mean, p95) voxel error against the analytic field inside the region.

    The region is eroded by two voxels; a region too thin to survive the
    erosion is measured whole.
    """
    Grid(dims=spec.dims).check_same(
        Grid(dims=estimated.grid.dims), 'estimated field grid'
    )
    if fixed_labels is None:
        fixed_labels = fixed_layout(spec)
    support = fixed_labels == region
    eroded = ndimage.binary_erosion(support, iterations=ERODE_VOXELS)
    if eroded.any():
        support = eroded
    diff = estimated.vectors - gt_displacement(spec, region)
    error = np.sqrt(np.sum(diff * diff, axis=0))[support]
    return float(np.mean(error)), nearest_rank(error)
