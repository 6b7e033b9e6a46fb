"""Similarity, mask and regularization losses with analytic gradients.

Every loss returns a ``LossValueGrad``: the scalar value and a mapping from
the name of each differentiated argument to its gradient array. Inputs may
be ``Volume`` objects or plain arrays; all arithmetic is float64.
"""

from typing import Dict, Optional, Sequence, Tuple, Union
import logging

import attr
import numpy as np
from scipy import ndimage

from .errors import EmptyRoi, InvalidConfig, MissingInput
from .fields import VelocityField, WarpChain
from .volume import LabelMap, Volume


logger = logging.getLogger(__name__)

NCC_EPS = 1e-5
DICE_SMOOTH = 1e-5
HYBRID_EDT_SCALE = 100.0

MASK_LOSS_KINDS = ('dice', 'edt', 'edt_and_dice')
EDT_LOSS_FORMS = ('mse', 'rms')

ArrayLike = Union[Volume, np.ndarray]
RegionLike = Union[np.ndarray, Tuple[LabelMap, int], None]


def _non_negative(instance, attribute, value) -> None:
    if not np.isfinite(value) or value < 0:
        raise InvalidConfig('{} must be finite and >= 0, got {}'.format(
            attribute.name, value
        ))


@attr.s(frozen=True, slots=True)
class LossWeights():
    """gamma0 (voxel-wise), gamma1 (mask-wise), gamma2 (regularization)."""

    gamma0: float = attr.ib(default=1.0, converter=float, validator=_non_negative)
    gamma1: float = attr.ib(default=0.1, converter=float, validator=_non_negative)
    gamma2: float = attr.ib(default=0.01, converter=float, validator=_non_negative)

    def to_dict(self) -> Dict[str, float]:
        return {'gamma0': self.gamma0,
                'gamma1': self.gamma1,
                'gamma2': self.gamma2}


@attr.s(frozen=True, eq=False)
class LossValueGrad():
    """A loss value and its gradients keyed by argument name."""

    value: float = attr.ib(converter=float)
    grads: Dict[str, np.ndarray] = attr.ib(factory=dict, repr=False)

    @property
    def grad(self) -> np.ndarray:
        """The gradient, for losses with a single differentiated argument."""
        if len(self.grads) != 1:
            raise ValueError('loss has gradients for {}'.format(sorted(self.grads)))
        return next(iter(self.grads.values()))


def _values(x: ArrayLike) -> np.ndarray:
    if isinstance(x, Volume):
        return x.as_float()
    return np.asarray(x, dtype=np.float64)


def _check_pair(a: ArrayLike, b: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(a, Volume) and isinstance(b, Volume):
        a.grid.check_same(b.grid)
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ValueError('shape mismatch: {} vs {}'.format(va.shape, vb.shape))
    return va, vb


def _roi_weights(roi: Optional[np.ndarray],
                 shape: Tuple[int, ...]) -> Tuple[np.ndarray, int]:
    if roi is None:
        support = np.ones(shape, dtype=bool)
    else:
        support = np.asarray(roi, dtype=bool)
    count = int(np.count_nonzero(support))
    if count == 0:
        raise EmptyRoi('region of interest has no voxels')
    return support, count


def mse_loss(warped: ArrayLike,
             fixed: ArrayLike,
             roi: Optional[np.ndarray] = None) -> LossValueGrad:
    """Mean squared intensity difference over the ROI."""
    w, f = _check_pair(warped, fixed)
    support, count = _roi_weights(roi, w.shape)
    diff = np.where(support, w - f, 0.0)
    value = np.sum(diff * diff) / count
    return LossValueGrad(value, {'warped': 2.0 * diff / count})


def _window_sizes(shape: Tuple[int, ...], window: int) -> Tuple[int, ...]:
    return tuple(window if size > 1 else 1 for size in shape)


def lncc_loss(warped: ArrayLike,
              fixed: ArrayLike,
              window: int = 9,
              roi: Optional[np.ndarray] = None) -> LossValueGrad:
    """1 - mean local squared normalized cross correlation.

    Window statistics are averaged over the in-grid voxels of each cubic
    window, so the loss is invariant to positive affine intensity maps up
    to the variance floor ``NCC_EPS``.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError('LNCC window must be odd and >= 3, got {}'.format(window))
    i, j = _check_pair(warped, fixed)
    support, count = _roi_weights(roi, i.shape)
    sizes = _window_sizes(i.shape, window)

    def box(x):
        return ndimage.uniform_filter(x, size=sizes, mode='constant', cval=0.0)

    norm = box(np.ones(i.shape))

    def mean(x):
        return box(x) / norm

    def mean_adjoint(g):
        return box(g / norm)

    mu_i = mean(i)
    mu_j = mean(j)
    cross = mean(i * j) - mu_i * mu_j
    var_i = mean(i * i) - mu_i * mu_i + NCC_EPS
    var_j = mean(j * j) - mu_j * mu_j + NCC_EPS
    cc = cross * cross / (var_i * var_j)
    value = 1.0 - np.sum(np.where(support, cc, 0.0)) / count

    g_cc = np.where(support, -1.0 / count, 0.0)
    g_cross = g_cc * 2.0 * cross / (var_i * var_j)
    g_var = -g_cc * cross * cross / (var_i * var_i * var_j)
    grad = (
        j * mean_adjoint(g_cross)
        - mean_adjoint(g_cross * mu_j)
        + 2.0 * i * mean_adjoint(g_var)
        - 2.0 * mean_adjoint(g_var * mu_i)
    )
    return LossValueGrad(value, {'warped': grad})


def soft_dice_loss(warped_mask: ArrayLike,
                   fixed_mask: ArrayLike) -> LossValueGrad:
    """1 - (2 sum(wf) + s) / (sum(w) + sum(f) + s)."""
    w, f = _check_pair(warped_mask, fixed_mask)
    numerator = 2.0 * np.sum(w * f) + DICE_SMOOTH
    denominator = np.sum(w) + np.sum(f) + DICE_SMOOTH
    value = 1.0 - numerator / denominator
    grad = -(2.0 * f * denominator - numerator) / (denominator * denominator)
    return LossValueGrad(value, {'warped_mask': grad})


def edt_loss(warped_edt: ArrayLike,
             fixed_edt: ArrayLike,
             form: str = 'mse',
             roi: Optional[np.ndarray] = None) -> LossValueGrad:
    """Squared difference of EDT masks: mean (``mse``) or its root (``rms``)."""
    if form not in EDT_LOSS_FORMS:
        raise ValueError('unknown EDT loss form {!r}'.format(form))
    w, f = _check_pair(warped_edt, fixed_edt)
    support, count = _roi_weights(roi, w.shape)
    diff = np.where(support, w - f, 0.0)
    mse = np.sum(diff * diff) / count
    grad = 2.0 * diff / count
    if form == 'mse':
        return LossValueGrad(mse, {'warped_edt': grad})
    value = np.sqrt(mse)
    if value > 0.0:
        grad = grad / (2.0 * value)
    else:
        grad = np.zeros_like(grad)
    return LossValueGrad(value, {'warped_edt': grad})


def mask_loss(kind: str,
              warped_mask: Optional[ArrayLike] = None,
              fixed_mask: Optional[ArrayLike] = None,
              warped_edt: Optional[ArrayLike] = None,
              fixed_edt: Optional[ArrayLike] = None,
              edt_form: str = 'mse',
              roi: Optional[np.ndarray] = None) -> LossValueGrad:
    """Mask-wise loss: Dice, EDT, or (Dice + 100 EDT) / 2."""
    if kind not in MASK_LOSS_KINDS:
        raise ValueError('unknown mask loss {!r}'.format(kind))
    dice = edt = None
    if kind in ('dice', 'edt_and_dice'):
        if warped_mask is None or fixed_mask is None:
            raise MissingInput('{} loss needs warped and fixed masks'.format(kind))
        dice = soft_dice_loss(warped_mask, fixed_mask)
    if kind in ('edt', 'edt_and_dice'):
        if warped_edt is None or fixed_edt is None:
            raise MissingInput('{} loss needs warped and fixed EDT masks'.format(kind))
        edt = edt_loss(warped_edt, fixed_edt, edt_form, roi)

    if kind == 'dice':
        return dice  # type: ignore
    if kind == 'edt':
        return edt  # type: ignore
    return LossValueGrad(
        (dice.value + HYBRID_EDT_SCALE * edt.value) / 2.0,  # type: ignore
        {
            'warped_mask': dice.grads['warped_mask'] / 2.0,  # type: ignore
            'warped_edt': HYBRID_EDT_SCALE * edt.grads['warped_edt'] / 2.0,  # type: ignore
        }
    )


def _region_mask(region: RegionLike,
                 shape: Tuple[int, ...]) -> np.ndarray:
    if region is None:
        return np.ones(shape, dtype=bool)
    if isinstance(region, tuple):
        lm, label = region
        return lm.mask(label)
    return np.asarray(region, dtype=bool)


def l2_diffusion(v: Union[VelocityField, np.ndarray],
                 region: RegionLike = None,
                 reduction: str = 'mean') -> LossValueGrad:
    """Squared forward differences of the field, summed over axes.

    The pair (x, x + e_axis) belongs to the region of x. With ``mean`` each
    axis' sum is divided by its number of pairs in the region.
    """
    if reduction not in ('mean', 'sum'):
        raise ValueError('unknown reduction {!r}'.format(reduction))
    vectors = v.vectors if isinstance(v, VelocityField) else np.asarray(v, dtype=np.float64)
    shape = vectors.shape[1:]
    support = _region_mask(region, shape)
    value = 0.0
    grad = np.zeros(vectors.shape)
    for axis in range(3):
        n = shape[axis]
        if n < 2:
            continue
        first = [slice(None)] * 3
        second = [slice(None)] * 3
        first[axis] = slice(0, n - 1)
        second[axis] = slice(1, n)
        first_t, second_t = tuple(first), tuple(second)
        pair_mask = support[first_t]
        pairs = int(np.count_nonzero(pair_mask))
        if pairs == 0:
            continue
        scale = 1.0 / pairs if reduction == 'mean' else 1.0
        diff = (vectors[(slice(None),) + second_t]
                - vectors[(slice(None),) + first_t]) * pair_mask
        value += scale * np.sum(diff * diff)
        grad[(slice(None),) + second_t] += 2.0 * scale * diff
        grad[(slice(None),) + first_t] -= 2.0 * scale * diff
    return LossValueGrad(value, {'velocity': grad})


def l2_diffusion_partitioned(v: Union[VelocityField, np.ndarray],
                             lm: LabelMap,
                             reduction: str = 'mean') -> LossValueGrad:
    """Sum of per-region ``l2_diffusion`` over every label of ``lm``."""
    value = 0.0
    grad = None
    for label in lm.label_set:
        part = l2_diffusion(v, lm.labels == label, reduction)
        value += part.value
        grad = part.grad if grad is None else grad + part.grad
    return LossValueGrad(value, {'velocity': grad})


def total_loss(parts: Sequence[Optional[LossValueGrad]],
               w: LossWeights) -> LossValueGrad:
    """gamma0 L_v + gamma1 L_m + gamma2 R; gradients merged by argument."""
    if len(parts) != 3:
        raise ValueError('expected (voxel, mask, regularization) parts')
    value = 0.0
    grads: Dict[str, np.ndarray] = {}
    for part, weight in zip(parts, (w.gamma0, w.gamma1, w.gamma2)):
        if part is None:
            continue
        value += weight * part.value
        for name, grad in part.grads.items():
            if name in grads:
                grads[name] = grads[name] + weight * grad
            else:
                grads[name] = weight * grad
    return LossValueGrad(value, grads)


def backprop_through_warp_and_integration(grad_wrt_warped: np.ndarray,
                                          vol: ArrayLike,
                                          v: Union[VelocityField, np.ndarray],
                                          steps: int) -> np.ndarray:
    """Gradient w.r.t. velocity of a loss on ``warp(vol, integrate(v))``."""
    vectors = v.vectors if isinstance(v, VelocityField) else np.asarray(v, dtype=np.float64)
    chain = WarpChain(vectors, steps)
    return chain.backward([(_values(vol), np.asarray(grad_wrt_warped))])
