"""Per-region instance optimization.

Each region pair is registered on its own: a stationary velocity field is
optimized with Adam against the full-chain gradient (loss, warp,
scaling-and-squaring) over a coarse-to-fine pyramid.
"""

from typing import List, Optional, Tuple
import logging

import attr
import numpy as np
from scipy import ndimage

from .config import OptimizerConfig
from .cropping import uncrop_displacement
from .distance import EdtMask
from .errors import EmptyRegion, NonFiniteLoss
from .fields import DisplacementField, VelocityField, WarpChain, integrate_velocity
from .grid import Box, Grid
from .interpolation import TrilinearStencil, identity_grid
from .losses import (
    LossValueGrad, l2_diffusion, l2_diffusion_partitioned, lncc_loss,
    mask_loss, mse_loss, total_loss
)
from .segreg_logger import SegRegLogger
from .volume import LabelMap, Volume


logger = logging.getLogger(__name__)

LossRow = Tuple[float, float, float, float]


@attr.s(frozen=True, eq=False)
class RegionPair():
    """One masked moving/fixed sub-problem, possibly cropped.

    ``box`` locates the pair's grid inside ``full_grid``. ``fixed_mask`` and
    ``moving_mask`` are binary maps (1 inside the region).
    """

    label: int = attr.ib()
    moving: Volume = attr.ib()
    fixed: Volume = attr.ib()
    moving_mask: LabelMap = attr.ib()
    fixed_mask: LabelMap = attr.ib()
    moving_edt: EdtMask = attr.ib()
    fixed_edt: EdtMask = attr.ib()
    box: Box = attr.ib()
    full_grid: Grid = attr.ib()

    def __attrs_post_init__(self) -> None:
        grid = self.fixed.grid
        for name in ('moving', 'moving_mask', 'fixed_mask', 'moving_edt', 'fixed_edt'):
            grid.check_same(getattr(self, name).grid, name)
        if self.box.dims != grid.dims:
            raise ValueError('box dims {} do not match pair grid {}'.format(
                self.box.dims, grid.dims
            ))
        self.box.check_inside(self.full_grid)


    @property
    def grid(self) -> Grid:
        return self.fixed.grid


@attr.s(frozen=True, eq=False)
class RegionResult():
    """Optimized sub-field of one region.

    ``displacement`` lives on the full grid; ``velocity`` on the pair grid.
    """

    label: int = attr.ib()
    velocity: VelocityField = attr.ib(repr=False)
    displacement: DisplacementField = attr.ib(repr=False)
    loss_trace: List[LossRow] = attr.ib(factory=list, repr=False)


@attr.s(frozen=True, eq=False)
class AdamState():
    """Parameters plus first and second moments; ``step`` counts updates."""

    params: np.ndarray = attr.ib()
    m: np.ndarray = attr.ib()
    v: np.ndarray = attr.ib()
    step: int = attr.ib(default=0)

    @classmethod
    def start(cls, params: np.ndarray) -> 'AdamState':
        params = np.asarray(params, dtype=np.float64)
        return cls(params=params.copy(),
                   m=np.zeros_like(params),
                   v=np.zeros_like(params))


def adam_update(state: AdamState,
                grad: np.ndarray,
                learning_rate: float = 0.05,
                beta1: float = 0.9,
                beta2: float = 0.999,
                eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam step."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.params.shape:
        raise ValueError('gradient shape {} does not match parameters {}'.format(
            grad.shape, state.params.shape
        ))
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    params = state.params - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(params=params, m=m, v=v, step=step)


def _smoothing_sigma(shape: Tuple[int, ...], factor: int) -> Tuple[float, ...]:
    return tuple(factor / 2.0 if size > 1 else 0.0 for size in shape)


def downsample(array: np.ndarray,
               factor: int) -> np.ndarray:
    """Gaussian pre-smoothing (sigma = factor / 2) then strided subsampling."""
    if factor == 1:
        return array
    smooth = ndimage.gaussian_filter(array, _smoothing_sigma(array.shape, factor),
                                     mode='nearest')
    return smooth[::factor, ::factor, ::factor]


def downsample_mask(mask: np.ndarray,
                    factor: int) -> np.ndarray:
    """A coarse voxel is set when any fine voxel of its cell is set."""
    if factor == 1:
        return mask
    grown = ndimage.maximum_filter(mask.astype(np.uint8), size=factor,
                                   mode='constant', origin=-(factor // 2))
    return grown[::factor, ::factor, ::factor].astype(bool)


def upsample_velocity(vectors: np.ndarray,
                      shape: Tuple[int, ...],
                      coarse_factor: int,
                      fine_factor: int) -> np.ndarray:
    """Trilinear resampling onto a finer level; vectors scale with the grid."""
    ratio = fine_factor / coarse_factor
    coords = identity_grid(shape) * ratio
    stencil = TrilinearStencil(coords, vectors.shape[1:])
    scale = coarse_factor / fine_factor
    return np.stack([stencil.sample(vectors[k]) * scale for k in range(3)])


@attr.s(frozen=True, eq=False)
class _Level():
    factor: int = attr.ib()
    moving: np.ndarray = attr.ib()
    fixed: np.ndarray = attr.ib()
    moving_mask: np.ndarray = attr.ib()
    fixed_mask: np.ndarray = attr.ib()
    moving_edt: np.ndarray = attr.ib()
    fixed_edt: np.ndarray = attr.ib()
    fixed_labels: LabelMap = attr.ib()
    roi: np.ndarray = attr.ib()

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.fixed.shape


def region_of_interest(pair: RegionPair,
                       dilation: int) -> np.ndarray:
    """Union of both region supports grown by ``dilation`` voxels."""
    support = (pair.fixed_mask.labels > 0) | (pair.moving_mask.labels > 0)
    if dilation > 0:
        support = ndimage.binary_dilation(support, iterations=dilation)
    return support


def _build_level(pair: RegionPair,
                 roi: np.ndarray,
                 factor: int) -> _Level:
    fixed_labels = pair.fixed_mask.labels[::factor, ::factor, ::factor]
    return _Level(
        factor=factor,
        moving=downsample(pair.moving.as_float(), factor),
        fixed=downsample(pair.fixed.as_float(), factor),
        moving_mask=downsample(pair.moving_mask.labels.astype(np.float64), factor),
        fixed_mask=downsample(pair.fixed_mask.labels.astype(np.float64), factor),
        moving_edt=downsample(pair.moving_edt.values, factor),
        fixed_edt=downsample(pair.fixed_edt.values, factor),
        fixed_labels=LabelMap(grid=Grid(dims=fixed_labels.shape), labels=fixed_labels),
        roi=downsample_mask(roi, factor),
    )


class _RegionObjective():
    """Total loss and velocity gradient for one pyramid level."""

    def __init__(self,
                 level: _Level,
                 cfg: OptimizerConfig) -> None:
        """Constructor."""
        self.level = level
        self.cfg = cfg


    def _voxel_loss(self, warped: np.ndarray) -> LossValueGrad:
        if self.cfg.similarity == 'lncc':
            return lncc_loss(warped, self.level.fixed, self.cfg.lncc_window,
                             self.level.roi)
        return mse_loss(warped, self.level.fixed, self.level.roi)


    def _regularization(self, v: np.ndarray) -> LossValueGrad:
        if self.cfg.regularization_scope == 'regions':
            return l2_diffusion_partitioned(v, self.level.fixed_labels)
        return l2_diffusion(v)


    def __call__(self, v: np.ndarray) -> Tuple[LossRow, np.ndarray]:
        cfg = self.cfg
        level = self.level
        chain = WarpChain(v, cfg.integration_steps)
        images = {'warped': level.moving}
        voxel = self._voxel_loss(chain.warp(level.moving))

        mask_part: Optional[LossValueGrad] = None
        if cfg.weights.gamma1 > 0.0:
            warped_mask = warped_edt = None
            if cfg.mask_loss in ('dice', 'edt_and_dice'):
                warped_mask = chain.warp(level.moving_mask)
                images['warped_mask'] = level.moving_mask
            if cfg.mask_loss in ('edt', 'edt_and_dice'):
                warped_edt = chain.warp(level.moving_edt)
                images['warped_edt'] = level.moving_edt
            mask_part = mask_loss(cfg.mask_loss,
                                  warped_mask=warped_mask,
                                  fixed_mask=level.fixed_mask,
                                  warped_edt=warped_edt,
                                  fixed_edt=level.fixed_edt,
                                  edt_form=cfg.edt_loss_form,
                                  roi=level.roi)

        reg = self._regularization(v)
        total = total_loss([voxel, mask_part, reg], cfg.weights)
        grad = total.grads['velocity'] + chain.backward([
            (images[name], grad) for name, grad in total.grads.items()
            if name in images
        ])
        row = (total.value,
               voxel.value,
               mask_part.value if mask_part is not None else 0.0,
               reg.value)
        return row, grad


def register_region(pair: RegionPair,
                    cfg: OptimizerConfig) -> RegionResult:
    """Optimizes the sub-field of one region pair.

    The velocity starts at zero on the coarsest level; each finer level is
    seeded by upsampling the previous one and gets a fresh Adam state.
    """
    log = SegRegLogger(logger, pair.label)
    if not np.any(pair.fixed_mask.labels > 0):
        raise EmptyRegion('region {} is empty in the fixed map'.format(pair.label))
    if not np.any(pair.moving_mask.labels > 0):
        raise EmptyRegion('region {} is empty in the moving map'.format(pair.label))

    roi = region_of_interest(pair, cfg.roi_dilation)
    trace: List[LossRow] = []
    v: Optional[np.ndarray] = None
    previous_factor = None
    iteration = 0
    for factor in cfg.levels:
        level = _build_level(pair, roi, factor)
        if v is None:
            v = np.zeros((3,) + level.shape)
        else:
            v = upsample_velocity(v, level.shape, previous_factor, factor)
        objective = _RegionObjective(level, cfg)
        state = AdamState.start(v)
        log.info('level x%d: grid %s, %d iterations',
                 factor, level.shape, cfg.iterations)
        for i in range(cfg.iterations):
            row, grad = objective(state.params)
            if not all(np.isfinite(row)) or not np.all(np.isfinite(grad)):
                raise NonFiniteLoss(iteration, factor)
            trace.append(row)
            if i % cfg.log_every == 0:
                log.debug('iter %d total=%.6f Lv=%.6f Lm=%.6f R=%.6f',
                          iteration, *row)
            state = adam_update(state, grad,
                                learning_rate=cfg.learning_rate,
                                beta1=cfg.adam_beta1,
                                beta2=cfg.adam_beta2,
                                eps=cfg.adam_eps)
            iteration += 1
        v = state.params
        previous_factor = factor
        log.info('level x%d done: total %.6f -> %.6f',
                 factor, trace[-cfg.iterations][0], trace[-1][0])

    velocity = VelocityField(grid=pair.grid, vectors=v)
    local = integrate_velocity(velocity, cfg.integration_steps)
    displacement = uncrop_displacement(local, pair.box, pair.full_grid)
    return RegionResult(label=pair.label,
                        velocity=velocity,
                        displacement=displacement,
                        loss_trace=trace)
