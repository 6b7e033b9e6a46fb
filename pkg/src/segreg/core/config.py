"""Solver and pipeline configuration.

Configurations are immutable attrs classes. On disk they are INI files with
one section per concern::

    [optimizer]  iterations, learning_rate, adam_*, integration_steps,
                 levels, seed, log_every
    [loss]       similarity, mask_loss, gamma0..2, lncc_window,
                 edt_loss_form, edt_use_spacing, roi_dilation,
                 regularization_scope
    [pipeline]   crop_margin, threads
    [metrics]    sdlogj_mask, sdlogj_exclude_folded
"""

from typing import Any, Dict, Optional, Tuple, Union
import configparser
import logging
import os

import attr

from .errors import InvalidConfig, ParseError
from .losses import EDT_LOSS_FORMS, MASK_LOSS_KINDS, LossWeights


logger = logging.getLogger(__name__)

SIMILARITY_KINDS = ('mse', 'lncc')
REGULARIZATION_SCOPES = ('grid', 'regions')
SDLOGJ_MASKS = ('grid', 'foreground')

PRESETS: Dict[str, Dict[str, Any]] = {
    'cardiac-dice': {'similarity': 'mse', 'mask_loss': 'dice',
                     'weights': (1.0, 0.1, 0.01)},
    'cardiac-edt': {'similarity': 'mse', 'mask_loss': 'edt',
                    'weights': (1.0, 10.0, 0.01)},
    'cardiac-hybrid': {'similarity': 'mse', 'mask_loss': 'edt_and_dice',
                       'weights': (1.0, 0.1, 0.01)},
    'abdomen-dice': {'similarity': 'lncc', 'mask_loss': 'dice',
                     'weights': (1.0, 1.0, 0.1)},
    'abdomen-edt': {'similarity': 'lncc', 'mask_loss': 'edt',
                    'weights': (1.0, 100.0, 0.1)},
    'abdomen-hybrid': {'similarity': 'lncc', 'mask_loss': 'edt_and_dice',
                       'weights': (1.0, 1.0, 0.1)},
}


def _one_of(choices: Tuple[str, ...]):
    def check(instance, attribute, value) -> None:
        if value not in choices:
            raise InvalidConfig('{} must be one of {}, got {!r}'.format(
                attribute.name, ', '.join(choices), value
            ))
    return check


def _positive(instance, attribute, value) -> None:
    if not value > 0:
        raise InvalidConfig('{} must be > 0, got {}'.format(attribute.name, value))


def _open_unit(instance, attribute, value) -> None:
    if not 0.0 < value < 1.0:
        raise InvalidConfig('{} must lie in (0, 1), got {}'.format(
            attribute.name, value
        ))


def _non_negative_int(instance, attribute, value) -> None:
    if value is not None and value < 0:
        raise InvalidConfig('{} must be >= 0, got {}'.format(attribute.name, value))


def _check_levels(instance, attribute, value) -> None:
    if not value:
        raise InvalidConfig('levels must not be empty')
    if any(f < 1 for f in value):
        raise InvalidConfig('level factors must be >= 1, got {}'.format(value))
    if value[-1] != 1:
        raise InvalidConfig('levels must end with factor 1, got {}'.format(value))


def _check_window(instance, attribute, value) -> None:
    if value < 3 or value % 2 == 0:
        raise InvalidConfig('lncc_window must be odd and >= 3, got {}'.format(value))


def _as_levels(value) -> Tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(' ', '').split(',') if v]
    return tuple(int(v) for v in value)


def _as_weights(value) -> LossWeights:
    if isinstance(value, LossWeights):
        return value
    if isinstance(value, dict):
        return LossWeights(**value)
    return LossWeights(*value)


def _as_bool(value) -> bool:
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ('1', 'true', 'yes', 'on'):
            return True
        if lowered in ('0', 'false', 'no', 'off'):
            return False
        raise InvalidConfig('not a boolean: {!r}'.format(value))
    return bool(value)


def _as_optional_int(value) -> Optional[int]:
    if value is None:
        return None
    if isinstance(value, str) and value.strip().lower() in ('', 'none'):
        return None
    return int(value)


@attr.s(frozen=True, slots=True)
class OptimizerConfig():
    """Knobs of the per-region instance optimizer."""

    iterations: int = attr.ib(default=150, converter=int, validator=_positive)
    learning_rate: float = attr.ib(default=0.05, converter=float, validator=_positive)
    adam_beta1: float = attr.ib(default=0.9, converter=float, validator=_open_unit)
    adam_beta2: float = attr.ib(default=0.999, converter=float, validator=_open_unit)
    adam_eps: float = attr.ib(default=1e-8, converter=float, validator=_positive)
    weights: LossWeights = attr.ib(factory=LossWeights, converter=_as_weights)
    similarity: str = attr.ib(default='mse', validator=_one_of(SIMILARITY_KINDS))
    mask_loss: str = attr.ib(default='dice', validator=_one_of(MASK_LOSS_KINDS))
    integration_steps: int = attr.ib(default=7, converter=int, validator=_positive)
    levels: Tuple[int, ...] = attr.ib(default=(4, 2, 1), converter=_as_levels,
                                      validator=_check_levels)
    seed: int = attr.ib(default=0, converter=int)
    lncc_window: int = attr.ib(default=9, converter=int, validator=_check_window)
    edt_loss_form: str = attr.ib(default='mse', validator=_one_of(EDT_LOSS_FORMS))
    edt_use_spacing: bool = attr.ib(default=False, converter=_as_bool)
    roi_dilation: int = attr.ib(default=2, converter=int, validator=_non_negative_int)
    regularization_scope: str = attr.ib(default='grid',
                                        validator=_one_of(REGULARIZATION_SCOPES))
    log_every: int = attr.ib(default=25, converter=int, validator=_positive)


@attr.s(frozen=True, slots=True)
class SegRegConfig():
    """Whole-run configuration: the optimizer plus pipeline and metric knobs."""

    optimizer: OptimizerConfig = attr.ib(factory=OptimizerConfig)
    crop_margin: Optional[int] = attr.ib(default=None, converter=_as_optional_int,
                                         validator=_non_negative_int)
    threads: Optional[int] = attr.ib(default=None, converter=_as_optional_int)
    sdlogj_mask: str = attr.ib(default='grid', validator=_one_of(SDLOGJ_MASKS))
    sdlogj_exclude_folded: bool = attr.ib(default=False, converter=_as_bool)

    def __attrs_post_init__(self) -> None:
        if self.threads is not None and self.threads < 1:
            raise InvalidConfig('threads must be >= 1, got {}'.format(self.threads))


    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        opt = self.optimizer
        return {
            'optimizer': {
                'iterations': opt.iterations,
                'learning_rate': opt.learning_rate,
                'adam_beta1': opt.adam_beta1,
                'adam_beta2': opt.adam_beta2,
                'adam_eps': opt.adam_eps,
                'integration_steps': opt.integration_steps,
                'levels': list(opt.levels),
                'seed': opt.seed,
                'log_every': opt.log_every,
            },
            'loss': {
                'similarity': opt.similarity,
                'mask_loss': opt.mask_loss,
                'gamma0': opt.weights.gamma0,
                'gamma1': opt.weights.gamma1,
                'gamma2': opt.weights.gamma2,
                'lncc_window': opt.lncc_window,
                'edt_loss_form': opt.edt_loss_form,
                'edt_use_spacing': opt.edt_use_spacing,
                'roi_dilation': opt.roi_dilation,
                'regularization_scope': opt.regularization_scope,
            },
            'pipeline': {
                'crop_margin': self.crop_margin,
                'threads': self.threads,
            },
            'metrics': {
                'sdlogj_mask': self.sdlogj_mask,
                'sdlogj_exclude_folded': self.sdlogj_exclude_folded,
            },
        }


    @classmethod
    def from_dict(cls,
                  json_obj: Dict[str, Dict[str, Any]]) -> 'SegRegConfig':
        unknown = set(json_obj) - {'optimizer', 'loss', 'pipeline', 'metrics'}
        if unknown:
            raise InvalidConfig('unknown config sections: {}'.format(sorted(unknown)))
        optimizer = dict(json_obj.get('optimizer', {}))
        loss = dict(json_obj.get('loss', {}))
        weights = {
            key: loss.pop(key) for key in ('gamma0', 'gamma1', 'gamma2')
            if key in loss
        }
        optimizer.update(loss)
        try:
            return cls(
                optimizer=OptimizerConfig(weights=weights, **optimizer),
                **json_obj.get('pipeline', {}),
                **json_obj.get('metrics', {})
            )
        except TypeError as e:
            raise InvalidConfig('unknown config key: {}'.format(e))
        except ValueError as e:
            raise InvalidConfig(str(e))


def merge_config(cfg: SegRegConfig,
                 overrides: Dict[str, Dict[str, Any]]) -> SegRegConfig:
    """Returns ``cfg`` with the non-None values of ``overrides`` applied."""
    data = cfg.to_dict()
    for section, values in overrides.items():
        target = data.setdefault(section, {})
        for key, value in values.items():
            if value is not None:
                target[key] = value
    return SegRegConfig.from_dict(data)


def apply_preset(cfg: SegRegConfig,
                 name: str) -> SegRegConfig:
    """Loads the similarity, mask loss and weight ratios of a named preset."""
    if name not in PRESETS:
        raise InvalidConfig('unknown preset {!r}; choose from {}'.format(
            name, ', '.join(sorted(PRESETS))
        ))
    preset = PRESETS[name]
    gamma0, gamma1, gamma2 = preset['weights']
    logger.info('preset %s: similarity=%s mask_loss=%s weights=%s',
                name, preset['similarity'], preset['mask_loss'],
                preset['weights'])
    return merge_config(cfg, {'loss': {
        'similarity': preset['similarity'],
        'mask_loss': preset['mask_loss'],
        'gamma0': gamma0,
        'gamma1': gamma1,
        'gamma2': gamma2,
    }})


def load_config(path: Union[str, os.PathLike],
                base: Optional[SegRegConfig] = None) -> SegRegConfig:
    """Reads an INI config file on top of ``base`` (defaults if omitted)."""
    parser = configparser.ConfigParser()
    try:
        with open(path, 'r') as f:
            parser.read_file(f)
    except configparser.Error as e:
        lineno = getattr(e, 'lineno', 0) or 0
        raise ParseError(lineno, 'malformed config file: {}'.format(e))
    overrides = {
        section: dict(parser.items(section)) for section in parser.sections()
    }
    return merge_config(base or SegRegConfig(), overrides)


def save_config(cfg: SegRegConfig,
                path: Union[str, os.PathLike]) -> None:
    """Writes the effective config as INI."""
    parser = configparser.ConfigParser()
    for section, values in cfg.to_dict().items():
        parser[section] = {
            key: _ini_value(value) for key, value in values.items()
        }
    with open(path, 'w') as f:
        parser.write(f)


def _ini_value(value: Any) -> str:
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ','.join(str(v) for v in value)
    return str(value)
