"""Evaluation metrics: Dice, HD95, SDlogJ and folding counts.
"""

from typing import Any, Dict, Optional, Sequence, Tuple
from collections.abc import Iterable, Mapping
import json
import logging
import math
import numbers

import attr
import numpy as np
from scipy import ndimage

from .errors import AllVoxelsFolded, EmptySurface
from .fields import (
    DisplacementField, folding_count, jacobian_determinant, log_jacobian_stats
)
from .volume import LabelMap


logger = logging.getLogger(__name__)

HD_PERCENTILE = 0.95
FACE_NEIGHBORS = ndimage.generate_binary_structure(3, 1)


def dice(a: LabelMap,
         b: LabelMap,
         label: int) -> float:
    """2|A n B| / (|A| + |B|); 1.0 when the label is absent from both."""
    a.grid.check_same(b.grid)
    in_a = a.labels == label
    in_b = b.labels == label
    total = int(np.count_nonzero(in_a)) + int(np.count_nonzero(in_b))
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(in_a & in_b)) / total


def boundary_voxels(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with a background face neighbour.

    Outside the grid counts as background along axes longer than one voxel.
    """
    mask = np.asarray(mask, dtype=bool)
    pad = [(1, 1) if size > 1 else (0, 0) for size in mask.shape]
    padded = np.pad(mask, pad, mode='constant', constant_values=False)
    eroded = ndimage.binary_erosion(padded, structure=FACE_NEIGHBORS,
                                    border_value=1)
    inner = tuple(slice(before, before + size)
                  for (before, _), size in zip(pad, mask.shape))
    return mask & ~eroded[inner]


def nearest_rank(values: np.ndarray,
                 fraction: float = HD_PERCENTILE) -> float:
    """Nearest-rank percentile: the ceil(fraction * n)-th smallest value."""
    ordered = np.sort(np.asarray(values, dtype=np.float64).ravel())
    rank = max(1, int(math.ceil(fraction * ordered.size)))
    return float(ordered[rank - 1])


def _directed(source: np.ndarray,
              target: np.ndarray,
              spacing: Sequence[float]) -> np.ndarray:
    # distance from every voxel to the nearest target voxel
    dist = ndimage.distance_transform_edt(~target, sampling=spacing)
    return dist[source]


def hd95(a: LabelMap,
         b: LabelMap,
         label: int,
         spacing: Optional[Sequence[float]] = None) -> float:
    """95th percentile symmetric surface distance in mm."""
    a.grid.check_same(b.grid)
    spacing = tuple(spacing) if spacing is not None else a.grid.spacing
    surface_a = boundary_voxels(a.labels == label)
    surface_b = boundary_voxels(b.labels == label)
    if not surface_a.any():
        raise EmptySurface('a', label)
    if not surface_b.any():
        raise EmptySurface('b', label)
    return max(nearest_rank(_directed(surface_a, surface_b, spacing)),
               nearest_rank(_directed(surface_b, surface_a, spacing)))


def field_smoothness(u: DisplacementField,
                     mask: Optional[np.ndarray] = None,
                     exclude_folded: bool = False) -> Tuple[float, int, float]:
    """(sdlogj, folding_count, folding_fraction) of a displacement field."""
    jac = jacobian_determinant(u)
    folds = folding_count(jac)
    sd, _ = log_jacobian_stats(jac, mask, exclude_folded)
    return sd, folds, folds / u.grid.voxel_count


@attr.s(frozen=True, slots=True)
class LabelMetrics():
    dice: float = attr.ib()
    hd95_mm: Optional[float] = attr.ib(default=None)
    sdlogj: Optional[float] = attr.ib(default=None)

    def to_dict(self) -> Dict[str, Any]:
        return {'dice': self.dice,
                'hd95_mm': self.hd95_mm,
                'sdlogj': self.sdlogj}


@attr.s(frozen=True, eq=False)
class MetricsReport():
    """Per-label overlap and surface distance, plus global field smoothness.

    ``hd95_mm`` is None when the warped map lost the label entirely.
    """

    per_label: Dict[int, LabelMetrics] = attr.ib()
    sdlogj: Optional[float] = attr.ib()
    sdlogj_clamped: int = attr.ib()
    folding_count: int = attr.ib()
    folding_fraction: float = attr.ib()
    runtime_seconds: Optional[float] = attr.ib(default=None)

    @property
    def mean_dice(self) -> float:
        if not self.per_label:
            return 1.0
        return float(np.mean([m.dice for m in self.per_label.values()]))


    def with_runtime(self, seconds: float) -> 'MetricsReport':
        return attr.evolve(self, runtime_seconds=seconds)


    def to_dict(self) -> Dict[str, Any]:
        json_obj: Dict[str, Any] = {
            'per_label': {
                str(label): metrics.to_dict()
                for label, metrics in sorted(self.per_label.items())
            },
            'mean_dice': self.mean_dice,
            'sdlogj': self.sdlogj,
            'sdlogj_clamped': self.sdlogj_clamped,
            'folding_count': self.folding_count,
            'folding_fraction': self.folding_fraction,
        }
        if self.runtime_seconds is not None:
            json_obj['runtime_seconds'] = self.runtime_seconds
        return json_obj


    def to_json(self) -> str:
        return dump_fixed_json(self.to_dict())


def compute_report(warped_seg: LabelMap,
                   fixed_seg: LabelMap,
                   u: DisplacementField,
                   sdlogj_mask: str = 'grid',
                   exclude_folded: bool = False) -> MetricsReport:
    """Scores a warped moving map against the fixed map and the field."""
    warped_seg.grid.check_same(fixed_seg.grid)
    fixed_seg.grid.check_same(u.grid)
    jac = jacobian_determinant(u)
    mask = fixed_seg.labels != 0 if sdlogj_mask == 'foreground' else None
    try:
        sd, clamped = log_jacobian_stats(jac, mask, exclude_folded)
    except AllVoxelsFolded:
        logger.warning('every voxel folded; sdlogj undefined')
        sd, clamped = None, int(jac.samples.size)

    per_label: Dict[int, LabelMetrics] = {}
    for label in fixed_seg.foreground_labels:
        try:
            hd = hd95(warped_seg, fixed_seg, label)
        except EmptySurface as e:
            logger.warning('hd95 undefined: %s', e)
            hd = None
        try:
            label_sd, _ = log_jacobian_stats(jac, fixed_seg.mask(label),
                                             exclude_folded)
        except AllVoxelsFolded:
            label_sd = None
        per_label[label] = LabelMetrics(dice=dice(warped_seg, fixed_seg, label),
                                        hd95_mm=hd,
                                        sdlogj=label_sd)

    folds = folding_count(jac)
    return MetricsReport(per_label=per_label,
                         sdlogj=sd,
                         sdlogj_clamped=clamped,
                         folding_count=folds,
                         folding_fraction=folds / u.grid.voxel_count)


def _encode(item: Any) -> str:
    if item is None or isinstance(item, bool):
        return json.dumps(item)
    if isinstance(item, str):
        return json.dumps(item)
    # don't catch integers with numbers.Number
    if isinstance(item, numbers.Integral):
        return str(int(item))
    if isinstance(item, numbers.Number):
        value = float(item)  # type: ignore
        if not math.isfinite(value):
            return 'null'
        return '{:.6f}'.format(value)
    if isinstance(item, Mapping):
        return '{' + ', '.join(
            '{}: {}'.format(json.dumps(str(key)), _encode(value))
            for key, value in item.items()
        ) + '}'
    if isinstance(item, Iterable):
        return '[' + ', '.join(_encode(value) for value in item) + ']'
    raise TypeError('cannot encode {!r}'.format(item))


def dump_fixed_json(item: Any) -> str:
    """JSON text with every real printed with six decimals."""
    return _encode(item) + '\n'
