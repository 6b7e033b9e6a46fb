"""Label-map relabeling and seeded segmentation degradation.
"""

from typing import Mapping, Tuple
import logging

import numpy as np

from segreg.core.errors import InvalidConfig, TargetUnreachable, UnmappedLabel
from segreg.core.metrics import dice
from segreg.core.volume import LabelMap


logger = logging.getLogger(__name__)

DICE_TOLERANCE = 0.02
INITIAL_BATCH_FRACTION = 0.01
MAX_ROUNDS = 10000


def merge_labels(lm: LabelMap,
                 groups: Mapping[int, int]) -> LabelMap:
    """Relabels ``lm`` through ``groups`` (old label -> new label).

    Background maps to itself unless the mapping says otherwise.
    """
    labels = np.zeros(lm.grid.dims, dtype=np.int64)
    for label in lm.label_set:
        if label in groups:
            target = int(groups[label])
        elif label == 0:
            target = 0
        else:
            raise UnmappedLabel(label)
        if target < 0:
            raise InvalidConfig('label {} mapped to negative {}'.format(label, target))
        labels[lm.labels == label] = target
    return lm.with_labels(labels)


def mean_foreground_dice(a: LabelMap,
                         b: LabelMap) -> float:
    """Mean Dice over the foreground labels of ``b``."""
    labels = b.foreground_labels
    if not labels:
        return 1.0
    return float(np.mean([dice(a, b, label) for label in labels]))


_SHIFTS = [(axis, step) for axis in range(3) for step in (-1, 1)]


def _flip_candidates(labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(flat voxel index, neighbour label) for every face pair with differing labels."""
    flat_index = np.arange(labels.size).reshape(labels.shape)
    indices = []
    targets = []
    for axis, step in _SHIFTS:
        n = labels.shape[axis]
        if n < 2:
            continue
        here = [slice(None)] * 3
        there = [slice(None)] * 3
        if step > 0:
            here[axis], there[axis] = slice(0, n - 1), slice(1, n)
        else:
            here[axis], there[axis] = slice(1, n), slice(0, n - 1)
        mine = labels[tuple(here)]
        theirs = labels[tuple(there)]
        differ = mine != theirs
        indices.append(flat_index[tuple(here)][differ])
        targets.append(theirs[differ])
    if not indices:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=labels.dtype)
    return np.concatenate(indices), np.concatenate(targets)


def degrade_segmentation(lm: LabelMap,
                         target_dice: float,
                         seed: int = 0) -> LabelMap:
    """Random boundary flips until the mean foreground Dice hits the target.

    Each round moves a batch of boundary voxels to the label of a random
    differing face neighbour. A round that overshoots the target window or
    deletes a label is undone and the batch halved.
    """
    if not 0.0 < target_dice <= 1.0:
        raise InvalidConfig('target dice must lie in (0, 1], got {}'.format(target_dice))
    if target_dice >= 1.0 - 1e-12:
        return lm
    if not lm.foreground_labels:
        raise TargetUnreachable('label map has no foreground labels')

    rng = np.random.default_rng(seed)
    labels = np.array(lm.labels, copy=True)
    foreground = int(np.count_nonzero(labels))
    batch = max(1, int(INITIAL_BATCH_FRACTION * foreground))
    current = 1.0
    for _ in range(MAX_ROUNDS):
        if abs(current - target_dice) <= DICE_TOLERANCE:
            logger.info('degraded to mean dice %.4f (target %.2f)',
                        current, target_dice)
            return lm.with_labels(labels)
        indices, targets = _flip_candidates(labels)
        if indices.size == 0:
            break
        order = rng.permutation(indices.size)
        _, first = np.unique(indices[order], return_index=True)
        chosen = order[np.sort(first)][:batch]

        flat = labels.reshape(-1)
        previous = flat[indices[chosen]].copy()
        flat[indices[chosen]] = targets[chosen]
        candidate = lm.with_labels(labels)
        measured = mean_foreground_dice(candidate, lm)
        lost_label = candidate.label_set != lm.label_set
        if measured < target_dice - DICE_TOLERANCE or lost_label:
            flat[indices[chosen]] = previous
            batch //= 2
            if batch == 0:
                break
            continue
        current = measured
    raise TargetUnreachable(
        'boundary flips cannot reach mean dice {:.3f} (stuck at {:.3f})'.format(
            target_dice, current
        )
    )
