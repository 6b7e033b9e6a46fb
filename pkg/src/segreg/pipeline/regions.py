"""Split by segmentation, solve every region, compose by the fixed map.
"""

from typing import Dict, Iterator, List, Optional
from concurrent.futures import ThreadPoolExecutor
import logging
import os
import time

import attr

from segreg.core.config import OptimizerConfig, SegRegConfig
from segreg.core.cropping import bounding_box, crop, crop_array
from segreg.core.distance import EdtMask, normalized_edt_mask
from segreg.core.errors import LabelSetMismatch, SegRegException
from segreg.core.fields import (
    DisplacementField, compose_fields, warp_labelmap, warp_volume
)
from segreg.core.grid import Box
from segreg.core.metrics import MetricsReport, compute_report
from segreg.core.optimizer import LossRow, RegionPair, RegionResult, register_region
from segreg.core.segreg_logger import SegRegLogger
from segreg.core.volume import LabelMap, Volume, mask_apply


logger = logging.getLogger(__name__)


def _crop_edt(edt: EdtMask, box: Box) -> EdtMask:
    return EdtMask(grid=box.subgrid(edt.grid), values=crop_array(edt.values, box))


def split_regions(moving: Volume,
                  fixed: Volume,
                  moving_seg: LabelMap,
                  fixed_seg: LabelMap,
                  crop_margin: Optional[int] = None,
                  edt_use_spacing: bool = False) -> List[RegionPair]:
    """One masked pair per label, background included.

    With ``crop_margin`` each pair is cropped to the union of the label's
    bounding boxes in both maps, grown by the margin.
    """
    grid = fixed.grid
    grid.check_same(moving.grid, 'moving image grid')
    grid.check_same(moving_seg.grid, 'moving segmentation grid')
    grid.check_same(fixed_seg.grid, 'fixed segmentation grid')
    mismatch = set(moving_seg.label_set) ^ set(fixed_seg.label_set)
    if mismatch:
        raise LabelSetMismatch(mismatch)

    pairs = []
    for label in fixed_seg.label_set:
        masked_moving = mask_apply(moving, moving_seg, label)
        masked_fixed = mask_apply(fixed, fixed_seg, label)
        moving_mask = moving_seg.binary(label)
        fixed_mask = fixed_seg.binary(label)
        moving_edt = normalized_edt_mask(moving_seg, label, edt_use_spacing)
        fixed_edt = normalized_edt_mask(fixed_seg, label, edt_use_spacing)
        if crop_margin is None:
            box = Box.full(grid)
        else:
            box = bounding_box(moving_seg, label, crop_margin).union(
                bounding_box(fixed_seg, label, crop_margin)
            )
            masked_moving = crop(masked_moving, box)
            masked_fixed = crop(masked_fixed, box)
            moving_mask = crop(moving_mask, box)
            fixed_mask = crop(fixed_mask, box)
            moving_edt = _crop_edt(moving_edt, box)
            fixed_edt = _crop_edt(fixed_edt, box)
        pairs.append(RegionPair(label=label,
                                moving=masked_moving,
                                fixed=masked_fixed,
                                moving_mask=moving_mask,
                                fixed_mask=fixed_mask,
                                moving_edt=moving_edt,
                                fixed_edt=fixed_edt,
                                box=box,
                                full_grid=grid))
    return pairs


@attr.s(frozen=True, eq=False)
class SegRegOutput():
    """Everything one pipeline run produces."""

    field: DisplacementField = attr.ib(repr=False)
    warped: Volume = attr.ib(repr=False)
    warped_seg: LabelMap = attr.ib(repr=False)
    report: MetricsReport = attr.ib()
    traces: Dict[int, List[LossRow]] = attr.ib(repr=False)
    region_fields: Dict[int, DisplacementField] = attr.ib(repr=False)
    runtime_seconds: float = attr.ib(default=0.0)

    def __iter__(self) -> Iterator:
        return iter((self.field, self.warped, self.warped_seg,
                     self.report, self.traces))


def _solve(pair: RegionPair,
           cfg: OptimizerConfig) -> RegionResult:
    log = SegRegLogger(logger, pair.label)
    log.info('solving on grid %s', pair.grid.dims)
    try:
        result = register_region(pair, cfg)
    except SegRegException as e:
        e.region_label = pair.label
        log.exception('region failed')
        raise
    except Exception:
        log.exception('region failed with an unexpected error')
        raise
    log.info('done, final loss %.6f', result.loss_trace[-1][0])
    return result


def solve_regions(pairs: List[RegionPair],
                  cfg: OptimizerConfig,
                  threads: Optional[int] = None) -> Dict[int, RegionResult]:
    """Solves every pair concurrently; results keyed by label."""
    workers = threads or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [(pair.label, executor.submit(_solve, pair, cfg))
                   for pair in pairs]
        return {label: future.result() for label, future in futures}


def run_segreg(moving: Volume,
               fixed: Volume,
               moving_seg: LabelMap,
               fixed_seg: LabelMap,
               cfg: Optional[SegRegConfig] = None,
               eval_moving_seg: Optional[LabelMap] = None,
               eval_fixed_seg: Optional[LabelMap] = None) -> SegRegOutput:
    """Full pipeline: split, solve, compose, warp the original inputs, score.

    The report scores the warp of ``eval_moving_seg`` against
    ``eval_fixed_seg`` when given, so runs on merged or degraded maps are
    measured against the reference labelling.
    """
    cfg = cfg or SegRegConfig()
    start = time.perf_counter()
    pairs = split_regions(moving, fixed, moving_seg, fixed_seg,
                          cfg.crop_margin, cfg.optimizer.edt_use_spacing)
    logger.info('split into %d regions: %s',
                len(pairs), [pair.label for pair in pairs])
    results = solve_regions(pairs, cfg.optimizer, cfg.threads)

    labels = sorted(results)
    field = compose_fields([(label, results[label].displacement)
                            for label in labels], fixed_seg)
    warped = warp_volume(moving, field)
    warped_seg = warp_labelmap(moving_seg, field)

    score_moving = eval_moving_seg if eval_moving_seg is not None else moving_seg
    score_fixed = eval_fixed_seg if eval_fixed_seg is not None else fixed_seg
    scored = (warped_seg if score_moving is moving_seg
              else warp_labelmap(score_moving, field))
    report = compute_report(scored, score_fixed, field,
                            cfg.sdlogj_mask, cfg.sdlogj_exclude_folded)
    elapsed = time.perf_counter() - start
    logger.info('mean dice %.4f, sdlogj %s, %d folds, %.1fs',
                report.mean_dice, report.sdlogj, report.folding_count, elapsed)
    return SegRegOutput(field=field,
                        warped=warped,
                        warped_seg=warped_seg,
                        report=report,
                        traces={label: results[label].loss_trace for label in labels},
                        region_fields={label: results[label].displacement
                                       for label in labels},
                        runtime_seconds=elapsed)
