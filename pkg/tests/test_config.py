import pytest

from segreg.core.config import (
    PRESETS, OptimizerConfig, SegRegConfig, apply_preset, load_config,
    merge_config, save_config
)
from segreg.core.errors import InvalidConfig, ParseError


def test_defaults():
    cfg = OptimizerConfig()
    assert cfg.iterations == 150
    assert cfg.learning_rate == 0.05
    assert (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) == (0.9, 0.999, 1e-8)
    assert cfg.integration_steps == 7
    assert cfg.levels == (4, 2, 1)
    assert cfg.lncc_window == 9
    assert cfg.roi_dilation == 2


@pytest.mark.parametrize('name,similarity,mask_loss,weights', [
    ('cardiac-dice', 'mse', 'dice', (1.0, 0.1, 0.01)),
    ('cardiac-edt', 'mse', 'edt', (1.0, 10.0, 0.01)),
    ('cardiac-hybrid', 'mse', 'edt_and_dice', (1.0, 0.1, 0.01)),
    ('abdomen-dice', 'lncc', 'dice', (1.0, 1.0, 0.1)),
    ('abdomen-edt', 'lncc', 'edt', (1.0, 100.0, 0.1)),
    ('abdomen-hybrid', 'lncc', 'edt_and_dice', (1.0, 1.0, 0.1)),
])
def test_presets(name, similarity, mask_loss, weights):
    opt = apply_preset(SegRegConfig(), name).optimizer
    assert opt.similarity == similarity
    assert opt.mask_loss == mask_loss
    assert (opt.weights.gamma0, opt.weights.gamma1, opt.weights.gamma2) == weights


def test_every_preset_is_listed():
    assert len(PRESETS) == 6
    with pytest.raises(InvalidConfig):
        apply_preset(SegRegConfig(), 'thorax-mind')


@pytest.mark.parametrize('overrides', [
    {'optimizer': {'levels': '2,1,2'}},
    {'optimizer': {'levels': ''}},
    {'optimizer': {'adam_beta1': 1.0}},
    {'optimizer': {'iterations': 0}},
    {'loss': {'similarity': 'mi'}},
    {'loss': {'lncc_window': 4}},
    {'loss': {'gamma1': -0.5}},
    {'pipeline': {'threads': 0}},
    {'metrics': {'sdlogj_mask': 'lungs'}},
    {'optimizer': {'momentum': 0.9}},
])
def test_invalid_values(overrides):
    with pytest.raises(InvalidConfig):
        merge_config(SegRegConfig(), overrides)


def test_ini_round_trip(tmp_path):
    cfg = merge_config(apply_preset(SegRegConfig(), 'abdomen-edt'), {
        'optimizer': {'levels': (2, 1), 'seed': 7},
        'pipeline': {'crop_margin': 3, 'threads': 2},
        'metrics': {'sdlogj_exclude_folded': True},
    })
    path = tmp_path / 'config.ini'
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_file_values_and_overrides(tmp_path):
    path = tmp_path / 'segreg.ini'
    path.write_text('[optimizer]\niterations = 20\nlevels = 1\n'
                    '[loss]\nsimilarity = lncc\ngamma1 = 0.5\n')
    cfg = load_config(path)
    assert cfg.optimizer.iterations == 20
    assert cfg.optimizer.levels == (1,)
    assert cfg.optimizer.similarity == 'lncc'
    assert cfg.optimizer.weights.gamma1 == 0.5
    assert cfg.crop_margin is None

    flagged = merge_config(cfg, {'optimizer': {'iterations': 5, 'seed': None}})
    assert flagged.optimizer.iterations == 5
    assert flagged.optimizer.seed == cfg.optimizer.seed


def test_malformed_file(tmp_path):
    path = tmp_path / 'broken.ini'
    path.write_text('iterations = 3\n')
    with pytest.raises(ParseError):
        load_config(path)
