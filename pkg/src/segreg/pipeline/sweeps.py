"""Experiment drivers: segmentation-accuracy and label-merging sweeps.
"""

from typing import Dict, List, Mapping, Optional, Sequence
import logging

import attr

from segreg.core.config import SegRegConfig
from segreg.core.errors import InvalidConfig
from segreg.core.volume import LabelMap, Volume

from .labels import degrade_segmentation, mean_foreground_dice, merge_labels
from .regions import run_segreg


logger = logging.getLogger(__name__)


@attr.s(frozen=True, slots=True)
class SegmentationSweepRow():
    target: float = attr.ib()
    seg_dice: float = attr.ib()
    reg_dice: float = attr.ib()

    def to_dict(self) -> Dict[str, float]:
        return {'target': self.target,
                'seg_dice': self.seg_dice,
                'reg_dice': self.reg_dice}


@attr.s(frozen=True, slots=True)
class ModeSweepRow():
    n_regions: int = attr.ib()
    reg_dice: float = attr.ib()

    def to_dict(self) -> Dict[str, float]:
        return {'n_regions': self.n_regions,
                'reg_dice': self.reg_dice}


def segmentation_sweep(moving: Volume,
                       fixed: Volume,
                       moving_seg: LabelMap,
                       fixed_seg: LabelMap,
                       targets: Sequence[float],
                       cfg: Optional[SegRegConfig] = None) -> List[SegmentationSweepRow]:
    """Registers with both maps degraded to each target Dice.

    ``seg_dice`` is the mean achieved Dice of the two degraded maps;
    ``reg_dice`` scores the warped original moving map against the
    original fixed map.
    """
    cfg = cfg or SegRegConfig()
    if list(targets) != sorted(targets):
        raise InvalidConfig('sweep targets must be sorted, got {}'.format(list(targets)))
    seed = cfg.optimizer.seed
    rows = []
    for target in targets:
        degraded_moving = degrade_segmentation(moving_seg, target, seed)
        degraded_fixed = degrade_segmentation(fixed_seg, target, seed + 1)
        seg_dice = (mean_foreground_dice(degraded_moving, moving_seg)
                    + mean_foreground_dice(degraded_fixed, fixed_seg)) / 2.0
        output = run_segreg(moving, fixed, degraded_moving, degraded_fixed, cfg,
                            eval_moving_seg=moving_seg,
                            eval_fixed_seg=fixed_seg)
        row = SegmentationSweepRow(target=target,
                                   seg_dice=seg_dice,
                                   reg_dice=output.report.mean_dice)
        logger.info('sweep target %.2f: seg dice %.4f, reg dice %.4f',
                    target, row.seg_dice, row.reg_dice)
        rows.append(row)
    return rows


def mode_sweep(moving: Volume,
               fixed: Volume,
               moving_seg: LabelMap,
               fixed_seg: LabelMap,
               merges: Sequence[Mapping[int, int]],
               cfg: Optional[SegRegConfig] = None) -> List[ModeSweepRow]:
    """Registers once per label grouping, scored against the original labels."""
    cfg = cfg or SegRegConfig()
    rows = []
    for groups in merges:
        merged_moving = merge_labels(moving_seg, groups)
        merged_fixed = merge_labels(fixed_seg, groups)
        output = run_segreg(moving, fixed, merged_moving, merged_fixed, cfg,
                            eval_moving_seg=moving_seg,
                            eval_fixed_seg=fixed_seg)
        row = ModeSweepRow(n_regions=len(merged_fixed.label_set),
                           reg_dice=output.report.mean_dice)
        logger.info('mode with %d regions: reg dice %.4f',
                    row.n_regions, row.reg_dice)
        rows.append(row)
    return rows
