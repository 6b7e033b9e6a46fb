import math

import numpy as np
import pytest

from segreg.core.errors import AllVoxelsFolded, EmptySurface
from segreg.core.fields import DisplacementField
from segreg.core.grid import Grid
from segreg.core.metrics import (
    MetricsReport, LabelMetrics, boundary_voxels, compute_report, dice,
    dump_fixed_json, field_smoothness, hd95, nearest_rank
)
from segreg.core.volume import LabelMap

from helpers import box_labels, random_labels


def _lm(labels, spacing=(1.0, 1.0, 1.0)):
    return LabelMap(grid=Grid(dims=labels.shape, spacing=spacing), labels=labels)


def test_dice_examples():
    a = _lm(box_labels((6, 6, 6), (0, 0, 0), (2, 6, 6)))
    b = _lm(box_labels((6, 6, 6), (1, 0, 0), (3, 6, 6)))
    assert dice(a, a, 1) == 1.0
    assert dice(a, b, 1) == pytest.approx(0.5)
    assert dice(a, b, 7) == 1.0
    empty = _lm(np.zeros((6, 6, 6), dtype=np.int64))
    assert dice(a, empty, 1) == 0.0


def test_dice_is_symmetric():
    rng = np.random.default_rng(4)
    a = random_labels(rng, (7, 7, 7), 4)
    b = random_labels(rng, (7, 7, 7), 4)
    for label in range(4):
        assert dice(a, b, label) == dice(b, a, label)
        assert 0.0 <= dice(a, b, label) <= 1.0


def _brute_dice(a, b, label):
    both = size_a = size_b = 0
    for index in np.ndindex(a.shape):
        in_a = a[index] == label
        in_b = b[index] == label
        size_a += in_a
        size_b += in_b
        both += in_a and in_b
    if size_a + size_b == 0:
        return 1.0
    return 2.0 * both / (size_a + size_b)


@pytest.mark.parametrize('seed', range(50))
def test_dice_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in rng.integers(8, 13, size=3))
    n_labels = int(rng.integers(2, 6))
    a = random_labels(rng, dims, n_labels)
    b = random_labels(rng, dims, n_labels)
    for label in range(n_labels + 1):
        assert dice(a, b, label) == pytest.approx(_brute_dice(a.labels, b.labels, label))


def test_boundary_of_a_box_is_its_shell():
    mask = box_labels((8, 8, 8), (2, 2, 2), (6, 6, 6)).astype(bool)
    surface = boundary_voxels(mask)
    assert np.count_nonzero(surface) == 4 ** 3 - 2 ** 3
    assert not surface[3:5, 3:5, 3:5].any()


def test_grid_border_counts_as_background():
    surface = boundary_voxels(np.ones((4, 4, 4), dtype=bool))
    assert np.count_nonzero(surface) == 4 ** 3 - 2 ** 3


def test_nearest_rank():
    values = np.arange(1, 21, dtype=np.float64)
    assert nearest_rank(values, 0.95) == 19.0
    assert nearest_rank(values, 1.0) == 20.0
    assert nearest_rank(np.array([3.0]), 0.95) == 3.0


def test_hd95_identical_maps_is_zero():
    lm = _lm(box_labels((10, 10, 10), (2, 3, 2), (7, 8, 6)))
    assert hd95(lm, lm, 1) == 0.0


def test_hd95_single_voxels_in_mm():
    a = np.zeros((12, 12, 12), dtype=np.int64)
    b = np.zeros((12, 12, 12), dtype=np.int64)
    a[2, 5, 5] = 1
    b[6, 5, 5] = 1
    spacing = (1.5, 1.5, 1.5)
    assert hd95(_lm(a, spacing), _lm(b, spacing), 1) == pytest.approx(6.0)


def test_hd95_empty_surface():
    a = _lm(box_labels((6, 6, 6), (1, 1, 1), (3, 3, 3)))
    b = _lm(np.zeros((6, 6, 6), dtype=np.int64))
    with pytest.raises(EmptySurface) as excinfo:
        hd95(a, b, 1)
    assert excinfo.value.side == 'b'


def _brute_boundary(mask):
    points = []
    dims = mask.shape
    for index in zip(*np.nonzero(mask)):
        for axis in range(3):
            for step in (-1, 1):
                n = list(index)
                n[axis] += step
                if not 0 <= n[axis] < dims[axis] or not mask[tuple(n)]:
                    points.append(index)
                    break
            else:
                continue
            break
    return np.array(points, dtype=np.float64)


def _brute_hd95(a, b, spacing):
    pa = _brute_boundary(a) * spacing
    pb = _brute_boundary(b) * spacing
    dist = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2))

    def rank(values):
        ordered = np.sort(values)
        return ordered[max(1, math.ceil(0.95 * ordered.size)) - 1]

    return max(rank(dist.min(axis=1)), rank(dist.min(axis=0)))


@pytest.mark.parametrize('seed', range(50))
def test_hd95_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in rng.integers(8, 13, size=3))
    spacing = np.array([1.0, 0.5, 2.0])
    masks = []
    for _ in range(2):
        lo = rng.integers(0, 5, size=3)
        hi = lo + rng.integers(3, 7, size=3)
        mask = box_labels(dims, lo, hi).astype(bool)
        mask &= rng.random(dims) < 0.85
        masks.append(mask)
    a = _lm(masks[0].astype(np.int64), spacing)
    b = _lm(masks[1].astype(np.int64), spacing)
    assert hd95(a, b, 1) == pytest.approx(_brute_hd95(masks[0], masks[1], spacing))


def test_smoothness_of_zero_and_linear_fields():
    grid = Grid(dims=(6, 6, 6))
    assert field_smoothness(DisplacementField.zeros(grid)) == (0.0, 0, 0.0)
    vectors = 0.1 * grid.identity_coords()
    sd, folds, fraction = field_smoothness(DisplacementField(grid=grid, vectors=vectors))
    assert sd == pytest.approx(0.0, abs=1e-12)
    assert folds == 0 and fraction == 0.0


def test_smoothness_of_a_fully_folded_field():
    grid = Grid(dims=(5, 5, 5))
    vectors = np.zeros((3,) + grid.dims)
    vectors[0] = -2.0 * grid.identity_coords()[0]
    u = DisplacementField(grid=grid, vectors=vectors)
    with pytest.raises(AllVoxelsFolded):
        field_smoothness(u)


def test_report_on_a_perfect_match():
    labels = box_labels((8, 8, 8), (1, 1, 1), (4, 7, 7))
    labels[4:7, 1:7, 1:7] = 2
    lm = _lm(labels)
    report = compute_report(lm, lm, DisplacementField.zeros(lm.grid))
    assert sorted(report.per_label) == [1, 2]
    for metrics in report.per_label.values():
        assert metrics == LabelMetrics(dice=1.0, hd95_mm=0.0, sdlogj=0.0)
    assert report.mean_dice == 1.0
    assert report.sdlogj == 0.0
    assert report.folding_count == 0


def test_report_when_a_label_vanishes():
    labels = box_labels((8, 8, 8), (1, 1, 1), (4, 7, 7))
    labels[4:7, 1:7, 1:7] = 2
    fixed = _lm(labels)
    warped = _lm(np.where(labels == 2, 1, labels))
    report = compute_report(warped, fixed, DisplacementField.zeros(fixed.grid))
    assert report.per_label[2].dice == 0.0
    assert report.per_label[2].hd95_mm is None
    assert report.per_label[1].hd95_mm is not None


def test_report_json_has_six_decimals():
    report = MetricsReport(per_label={1: LabelMetrics(dice=2.0 / 3.0, hd95_mm=None,
                                                      sdlogj=0.25)},
                           sdlogj=0.1,
                           sdlogj_clamped=0,
                           folding_count=3,
                           folding_fraction=0.5)
    text = report.to_json()
    assert '"dice": 0.666667' in text
    assert '"hd95_mm": null' in text
    assert '"folding_count": 3' in text
    assert 'runtime_seconds' not in text
    assert '"runtime_seconds": 1.500000' in report.with_runtime(1.5).to_json()


def test_dump_fixed_json():
    text = dump_fixed_json({'a': 1.0 / 3.0, 'b': [1, 2.5], 'c': None,
                            'd': True, 'e': float('nan')})
    assert text == ('{"a": 0.333333, "b": [1, 2.500000], "c": null, '
                    '"d": true, "e": null}\n')
