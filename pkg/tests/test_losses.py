import numpy as np
import pytest

from segreg.core.errors import EmptyRoi, GridMismatch, InvalidConfig, MissingInput
from segreg.core.fields import VelocityField, WarpChain, integrate_velocity, warp_volume
from segreg.core.grid import Grid
from segreg.core.losses import (
    LossValueGrad, LossWeights, backprop_through_warp_and_integration,
    edt_loss, l2_diffusion, l2_diffusion_partitioned, lncc_loss, mask_loss,
    mse_loss, soft_dice_loss, total_loss
)
from segreg.core.volume import Volume

from helpers import (
    box_labels, central_difference, offset_velocity, random_labels,
    relative_error
)


SEEDS = range(20)


def test_mse_values():
    a = np.full((4, 4, 4), 3.0)
    b = np.full((4, 4, 4), 1.0)
    assert mse_loss(a, b).value == 4.0
    same = mse_loss(a, a)
    assert same.value == 0.0
    assert not same.grad.any()


def test_mse_accepts_volumes_and_checks_grids():
    grid = Grid(dims=(3, 3, 3))
    a = Volume(grid=grid, samples=np.ones(grid.dims))
    assert mse_loss(a, a).value == 0.0
    other = Volume(grid=Grid(dims=(3, 3, 3), spacing=(2, 1, 1)),
                   samples=np.ones((3, 3, 3)))
    with pytest.raises(GridMismatch):
        mse_loss(a, other)


def test_mse_roi():
    a = np.zeros((4, 4, 4))
    b = np.zeros((4, 4, 4))
    a[0, 0, 0] = 2.0
    roi = np.zeros((4, 4, 4), dtype=bool)
    roi[0, 0, :2] = True
    result = mse_loss(a, b, roi)
    assert result.value == 2.0
    assert result.grad[0, 0, 0] == 2.0
    assert result.grad.sum() == 2.0
    with pytest.raises(EmptyRoi):
        mse_loss(a, b, np.zeros((4, 4, 4), dtype=bool))


@pytest.mark.parametrize('seed', SEEDS)
def test_mse_gradient(seed):
    rng = np.random.default_rng(seed)
    w, f = rng.random((2, 6, 6, 6))
    roi = rng.random((6, 6, 6)) < 0.7
    analytic = mse_loss(w, f, roi).grad
    numeric = central_difference(lambda x: mse_loss(x, f, roi).value, w)
    assert relative_error(analytic, numeric) < 1e-6


def test_lncc_of_identical_images():
    rng = np.random.default_rng(0)
    f = rng.random((8, 8, 8))
    assert lncc_loss(f, f, 3).value <= 1e-3


@pytest.mark.parametrize('seed', range(5))
def test_lncc_is_affine_invariant(seed):
    rng = np.random.default_rng(seed)
    w, f = rng.random((2, 8, 8, 8))
    base = lncc_loss(w, f, 5).value
    assert lncc_loss(2.0 * w + 3.0, f, 5).value == pytest.approx(base, abs=1e-3)
    assert lncc_loss(2.0 * f + 3.0, f, 5).value <= 1e-3


def test_lncc_window_validation():
    f = np.zeros((4, 4, 4))
    with pytest.raises(ValueError):
        lncc_loss(f, f, 4)
    with pytest.raises(ValueError):
        lncc_loss(f, f, 1)


@pytest.mark.parametrize('seed', SEEDS)
def test_lncc_gradient(seed):
    rng = np.random.default_rng(seed)
    w, f = rng.random((2, 6, 6, 6))
    roi = rng.random((6, 6, 6)) < 0.8 if seed % 2 else None
    analytic = lncc_loss(w, f, 3, roi).grad
    numeric = central_difference(lambda x: lncc_loss(x, f, 3, roi).value, w)
    assert relative_error(analytic, numeric) < 1e-4


def test_soft_dice_values():
    dims = (6, 6, 6)
    a = box_labels(dims, (0, 0, 0), (2, 2, 2)).astype(float)
    b = box_labels(dims, (1, 0, 0), (3, 2, 2)).astype(float)
    disjoint = box_labels(dims, (4, 4, 4), (6, 6, 6)).astype(float)
    assert soft_dice_loss(a, a).value == pytest.approx(0.0, abs=1e-6)
    assert soft_dice_loss(a, disjoint).value == pytest.approx(1.0, abs=1e-6)
    assert soft_dice_loss(a, b).value == pytest.approx(0.5, abs=1e-4)


@pytest.mark.parametrize('seed', SEEDS)
def test_soft_dice_gradient(seed):
    rng = np.random.default_rng(seed)
    w, f = rng.random((2, 6, 6, 6))
    analytic = soft_dice_loss(w, f).grad
    numeric = central_difference(lambda x: soft_dice_loss(x, f).value, w)
    assert relative_error(analytic, numeric) < 1e-6


def test_edt_loss_values():
    f = np.ones((3, 3, 3))
    w = np.zeros((3, 3, 3))
    assert edt_loss(f, f).value == 0.0
    assert edt_loss(w, f).value == 1.0
    assert edt_loss(w, f, form='rms').value == 1.0
    with pytest.raises(ValueError):
        edt_loss(w, f, form='l1')


@pytest.mark.parametrize('seed', SEEDS)
@pytest.mark.parametrize('form', ['mse', 'rms'])
def test_edt_gradient(seed, form):
    rng = np.random.default_rng(seed)
    w, f = rng.random((2, 6, 6, 6))
    analytic = edt_loss(w, f, form).grad
    numeric = central_difference(lambda x: edt_loss(x, f, form).value, w)
    assert relative_error(analytic, numeric) < 1e-6


def test_mask_loss_dispatch():
    rng = np.random.default_rng(3)
    w, f, we, fe = rng.random((4, 5, 5, 5))
    dice = mask_loss('dice', warped_mask=w, fixed_mask=f)
    assert dice.value == soft_dice_loss(w, f).value
    edt = mask_loss('edt', warped_edt=we, fixed_edt=fe)
    assert edt.value == edt_loss(we, fe).value
    hybrid = mask_loss('edt_and_dice', w, f, we, fe)
    assert hybrid.value == pytest.approx((dice.value + 100.0 * edt.value) / 2.0)
    with pytest.raises(MissingInput):
        mask_loss('edt_and_dice', warped_mask=w, fixed_mask=f)
    with pytest.raises(ValueError):
        mask_loss('mind', w, f)


def test_hybrid_arithmetic():
    dice = LossValueGrad(0.4, {'warped_mask': np.zeros(1)})
    edt = LossValueGrad(0.002, {'warped_edt': np.zeros(1)})
    assert (dice.value + 100.0 * edt.value) / 2.0 == pytest.approx(0.3)


@pytest.mark.parametrize('seed', SEEDS)
def test_hybrid_gradient(seed):
    rng = np.random.default_rng(seed)
    w, f, we, fe = rng.random((4, 6, 6, 6))
    result = mask_loss('edt_and_dice', w, f, we, fe)
    numeric_mask = central_difference(
        lambda x: mask_loss('edt_and_dice', x, f, we, fe).value, w)
    numeric_edt = central_difference(
        lambda x: mask_loss('edt_and_dice', w, f, x, fe).value, we)
    assert relative_error(result.grads['warped_mask'], numeric_mask) < 1e-6
    assert relative_error(result.grads['warped_edt'], numeric_edt) < 1e-6


def test_l2_diffusion_values():
    grid = Grid(dims=(6, 6, 6))
    assert l2_diffusion(VelocityField.constant(grid, (1.0, 2.0, 3.0))).value == 0.0
    x = grid.identity_coords()[0]
    vectors = np.zeros((3,) + grid.dims)
    vectors[0] = 0.2 * x
    assert l2_diffusion(vectors).value == pytest.approx(0.04)


@pytest.mark.parametrize('seed', SEEDS)
def test_l2_diffusion_gradient(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(3, 6, 6, 6))
    lm = random_labels(rng, (6, 6, 6), 3)
    region = (lm, lm.label_set[-1])
    analytic = l2_diffusion(v, region).grad
    numeric = central_difference(lambda x: l2_diffusion(x, region).value, v)
    assert relative_error(analytic, numeric) < 1e-6
    analytic = l2_diffusion_partitioned(v, lm).grad
    numeric = central_difference(lambda x: l2_diffusion_partitioned(x, lm).value, v)
    assert relative_error(analytic, numeric) < 1e-6


@pytest.mark.parametrize('seed', range(5))
def test_l2_partition_sums_to_whole(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(3, 7, 6, 5))
    lm = random_labels(rng, (7, 6, 5), 4)
    whole = l2_diffusion(v, reduction='sum').value
    parts = sum(l2_diffusion(v, lm.labels == label, reduction='sum').value
                for label in lm.label_set)
    assert parts == pytest.approx(whole, rel=1e-12)


def test_loss_weights_validation():
    with pytest.raises(InvalidConfig):
        LossWeights(-1.0, 0.1, 0.01)
    with pytest.raises(InvalidConfig):
        LossWeights(float('nan'), 0.1, 0.01)


def test_total_loss_weighting():
    rng = np.random.default_rng(4)
    w, f = rng.random((2, 4, 4, 4))
    voxel = mse_loss(w, f)
    mask = soft_dice_loss(w, f)
    reg = l2_diffusion(rng.normal(size=(3, 4, 4, 4)))
    alone = total_loss([voxel, mask, reg], LossWeights(1.0, 0.0, 0.0))
    assert alone.value == voxel.value
    assert np.array_equal(alone.grads['warped'], voxel.grad)
    weighted = total_loss([voxel, mask, reg], LossWeights(1.0, 10.0, 0.01))
    assert weighted.value == pytest.approx(voxel.value + 10.0 * mask.value
                                           + 0.01 * reg.value)
    assert np.allclose(weighted.grads['velocity'], 0.01 * reg.grad)


def test_zero_upstream_gradient():
    rng = np.random.default_rng(5)
    vol = rng.random((5, 5, 5))
    v = offset_velocity(rng, (5, 5, 5))
    grad = backprop_through_warp_and_integration(np.zeros((5, 5, 5)), vol, v, 7)
    assert not grad.any()


def test_constant_image_gives_zero_gradient():
    rng = np.random.default_rng(6)
    vol = np.full((5, 5, 5), 2.5)
    v = offset_velocity(rng, (5, 5, 5))
    grad = backprop_through_warp_and_integration(rng.normal(size=(5, 5, 5)), vol, v, 7)
    assert np.allclose(grad, 0.0, atol=1e-12)


@pytest.mark.parametrize('seed', SEEDS)
def test_full_chain_gradient(seed):
    rng = np.random.default_rng(seed)
    grid = Grid(dims=(6, 6, 6))
    moving = Volume(grid=grid, samples=rng.random(grid.dims))
    fixed = rng.random(grid.dims)
    v0 = offset_velocity(rng, grid.dims)
    steps = 7

    def loss(v):
        u = integrate_velocity(VelocityField(grid=grid, vectors=v), steps)
        return mse_loss(warp_volume(moving, u), fixed).value

    chain = WarpChain(v0, steps)
    upstream = mse_loss(chain.warp(moving.samples), fixed).grad
    analytic = backprop_through_warp_and_integration(upstream, moving, v0, steps)
    numeric = central_difference(loss, v0)
    assert relative_error(analytic, numeric) < 1e-4


@pytest.mark.parametrize('seed', range(5))
def test_chain_backward_sums_images(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((2, 5, 5, 5))
    ga, gb = rng.normal(size=(2, 5, 5, 5))
    v = offset_velocity(rng, (5, 5, 5))
    chain = WarpChain(v, 4)
    joint = chain.backward([(a, ga), (b, gb)])
    split = (backprop_through_warp_and_integration(ga, a, v, 4)
             + backprop_through_warp_and_integration(gb, b, v, 4))
    assert joint == pytest.approx(split, abs=1e-12)
