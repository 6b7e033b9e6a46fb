import numpy as np
import pytest

from segreg.core.cropping import bounding_box, crop, uncrop_displacement
from segreg.core.errors import BoxOutOfRange, GridMismatch, LabelNotFound
from segreg.core.fields import DisplacementField
from segreg.core.grid import Box, Grid
from segreg.core.interpolation import TrilinearStencil
from segreg.core.volume import (
    LabelMap, Volume, mask_apply, nearest_sample, trilinear_sample
)

from helpers import random_volume


def test_grid_rejects_bad_dims_and_spacing():
    with pytest.raises(ValueError):
        Grid(dims=(0, 4, 4))
    with pytest.raises(ValueError):
        Grid(dims=(4, 4, 4), spacing=(1.0, 0.0, 1.0))
    assert Grid(dims=(2, 3, 4)).voxel_count == 24


def test_trilinear_sample_at_lattice_point():
    rng = np.random.default_rng(0)
    vol = random_volume(rng, (4, 5, 3))
    assert trilinear_sample(vol, (2, 3, 1)) == vol.samples[2, 3, 1]


def test_trilinear_sample_interpolates_linearly():
    vol = Volume(grid=Grid(dims=(2, 1, 1)),
                 samples=np.array([0.0, 10.0]).reshape(2, 1, 1))
    assert trilinear_sample(vol, (0.25, 0, 0)) == pytest.approx(2.5)


def test_trilinear_sample_clamps_outside():
    rng = np.random.default_rng(1)
    vol = random_volume(rng, (4, 4, 4))
    assert trilinear_sample(vol, (-5, 0, 0)) == vol.samples[0, 0, 0]
    assert trilinear_sample(vol, (9, 9, 9)) == vol.samples[3, 3, 3]


def test_nearest_sample_rounds_half_up():
    lm = LabelMap(grid=Grid(dims=(2, 1, 1)),
                  labels=np.array([7, 3]).reshape(2, 1, 1))
    assert nearest_sample(lm, (0, 0, 0)) == 7
    assert nearest_sample(lm, (0.49, 0, 0)) == 7
    assert nearest_sample(lm, (0.5, 0, 0)) == 3


def test_label_set_is_sorted_and_exact():
    lm = LabelMap(grid=Grid(dims=(2, 2, 1)),
                  labels=np.array([5, 0, 2, 5]).reshape(2, 2, 1))
    assert lm.label_set == (0, 2, 5)
    assert lm.foreground_labels == (2, 5)
    with pytest.raises(ValueError):
        LabelMap(grid=Grid(dims=(1, 1, 1)), labels=np.array([-1]).reshape(1, 1, 1))


def test_mask_apply():
    grid = Grid(dims=(4, 4, 4))
    vol = Volume(grid=grid, samples=np.ones(grid.dims))
    everywhere = LabelMap(grid=grid, labels=np.ones(grid.dims, dtype=np.int64))
    assert np.array_equal(mask_apply(vol, everywhere, 1).samples, vol.samples)

    half = np.zeros(grid.dims, dtype=np.int64)
    half[:2] = 1
    masked = mask_apply(vol, LabelMap(grid=grid, labels=half), 1)
    assert masked.samples.sum() == grid.voxel_count / 2

    with pytest.raises(LabelNotFound):
        mask_apply(vol, everywhere, 3)
    other = LabelMap(grid=Grid(dims=(4, 4, 5)),
                     labels=np.ones((4, 4, 5), dtype=np.int64))
    with pytest.raises(GridMismatch):
        mask_apply(vol, other, 1)


def test_mask_apply_matches_per_voxel_definition():
    rng = np.random.default_rng(2)
    vol = random_volume(rng, (8, 8, 8))
    lm = LabelMap(grid=vol.grid, labels=rng.integers(0, 3, size=(8, 8, 8)))
    for label in lm.label_set:
        masked = mask_apply(vol, lm, label).samples
        for index in np.ndindex(lm.grid.dims):
            expected = vol.samples[index] if lm.labels[index] == label else 0.0
            assert masked[index] == expected


def _single_voxel(dims, at):
    labels = np.zeros(dims, dtype=np.int64)
    labels[at] = 1
    return LabelMap(grid=Grid(dims=dims), labels=labels)


def test_bounding_box():
    lm = _single_voxel((16, 16, 16), (5, 5, 5))
    assert bounding_box(lm, 1, 0) == Box(lo=(5, 5, 5), hi=(5, 5, 5))
    assert bounding_box(lm, 1, 2) == Box(lo=(3, 3, 3), hi=(7, 7, 7))

    corner = _single_voxel((16, 16, 16), (0, 0, 0))
    assert bounding_box(corner, 1, 3) == Box(lo=(0, 0, 0), hi=(3, 3, 3))
    with pytest.raises(LabelNotFound):
        bounding_box(corner, 4, 0)


def test_crop_full_box_is_identity():
    rng = np.random.default_rng(3)
    vol = random_volume(rng, (5, 4, 3))
    cropped = crop(vol, Box.full(vol.grid))
    assert cropped.grid == vol.grid
    assert np.array_equal(cropped.samples, vol.samples)


def test_crop_moves_origin():
    grid = Grid(dims=(16, 16, 16), spacing=(1.5, 1.0, 2.0), origin=(10.0, 0.0, 0.0))
    vol = Volume(grid=grid, samples=np.zeros(grid.dims))
    cropped = crop(vol, Box(lo=(4, 4, 4), hi=(11, 11, 11)))
    assert cropped.grid.dims == (8, 8, 8)
    assert cropped.grid.origin == pytest.approx((16.0, 4.0, 8.0))
    assert cropped.grid.spacing == grid.spacing


def test_crop_out_of_range():
    vol = Volume(grid=Grid(dims=(4, 4, 4)), samples=np.zeros((4, 4, 4)))
    with pytest.raises(BoxOutOfRange):
        crop(vol, Box(lo=(0, 0, 0), hi=(4, 3, 3)))


def test_uncrop_of_zero_field_is_zero():
    full = Grid(dims=(10, 10, 10))
    box = Box(lo=(2, 3, 4), hi=(6, 7, 8))
    zero = DisplacementField.zeros(box.subgrid(full))
    placed = uncrop_displacement(zero, box, full)
    assert placed.grid == full
    assert not placed.vectors.any()


def test_uncrop_places_vectors_inside_box_only():
    full = Grid(dims=(6, 6, 6))
    box = Box(lo=(1, 1, 1), hi=(3, 4, 2))
    local = DisplacementField.constant(box.subgrid(full), (1.0, -2.0, 0.5))
    placed = uncrop_displacement(local, box, full)
    inside = np.zeros(full.dims, dtype=bool)
    inside[box.slices] = True
    assert np.all(placed.vectors[:, inside] == np.array([[1.0], [-2.0], [0.5]]))
    assert not placed.vectors[:, ~inside].any()


def _stencil_inputs(seed, shape=(5, 4, 6)):
    rng = np.random.default_rng(seed)
    coords = np.stack([rng.uniform(0.1, size - 1.1, size=(3, 3, 2)) for size in shape])
    arrays = [rng.normal(size=shape) for _ in range(3)]
    grads = [rng.normal(size=(3, 3, 2)) for _ in range(3)]
    return coords, shape, arrays, grads


@pytest.mark.parametrize('seed', range(5))
def test_coord_gradient_matches_finite_differences(seed):
    coords, shape, arrays, _ = _stencil_inputs(seed)
    analytic = TrilinearStencil(coords, shape).coord_gradient(arrays[0])
    step = 1e-6
    for axis in range(3):
        plus = np.array(coords, copy=True)
        minus = np.array(coords, copy=True)
        plus[axis] += step
        minus[axis] -= step
        numeric = (TrilinearStencil(plus, shape).sample(arrays[0])
                   - TrilinearStencil(minus, shape).sample(arrays[0])) / (2.0 * step)
        assert analytic[axis] == pytest.approx(numeric, abs=1e-6)


@pytest.mark.parametrize('seed', range(5))
def test_coord_vjp_contracts_every_image(seed):
    coords, shape, arrays, grads = _stencil_inputs(seed)
    stencil = TrilinearStencil(coords, shape)
    expected = sum(grad * stencil.coord_gradient(array)
                   for array, grad in zip(arrays, grads))
    assert stencil.coord_vjp(list(zip(arrays, grads))) == pytest.approx(expected,
                                                                         abs=1e-12)


def test_coord_gradient_is_zero_outside_the_grid():
    coords = np.array([[-1.5], [1.2], [9.0]])
    stencil = TrilinearStencil(coords, (4, 4, 4))
    gradient = stencil.coord_gradient(np.arange(64.0).reshape(4, 4, 4))
    assert gradient[0, 0] == 0.0
    assert gradient[1, 0] != 0.0
    assert gradient[2, 0] == 0.0
