"""Phantom specifications and their sidecar files.

A sidecar is an INI file with a single ``[phantom]`` section::

    [phantom]
    dims = 48,48,48
    n_regions = 2
    layout = half-spaces
    translations = -3,0,0; 3,0,0
    texture = smooth
"""

from typing import Any, Dict, Optional, Sequence, Tuple, Union
import configparser
import os

import attr
import numpy as np

from segreg.core.errors import InvalidConfig, ParseError


LAYOUTS = ('half-spaces', 'nested-blobs', 'voronoi')
TEXTURES = ('smooth', 'piecewise-constant')

Triple = Tuple[float, float, float]


def _triples(value) -> Tuple[Triple, ...]:
    if isinstance(value, str):
        value = [part.split(',') for part in value.split(';') if part.strip()]
    out = []
    for item in value:
        triple = tuple(float(v) for v in item)
        if len(triple) != 3:
            raise InvalidConfig('expected 3 components, got {}'.format(item))
        out.append(triple)
    return tuple(out)


def _matrices(value) -> Optional[Tuple[Tuple[float, ...], ...]]:
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().lower() in ('', 'none'):
            return None
        value = [part.split(',') for part in value.split(';') if part.strip()]
    out = []
    for item in value:
        flat = tuple(float(v) for v in np.asarray(item, dtype=np.float64).ravel())
        if len(flat) != 9:
            raise InvalidConfig('affine matrices need 9 entries, got {}'.format(len(flat)))
        out.append(flat)
    return tuple(out)


def _dims(value) -> Tuple[int, int, int]:
    if isinstance(value, str):
        value = value.split(',')
    dims = tuple(int(v) for v in value)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise InvalidConfig('dims must be 3 positive integers, got {}'.format(value))
    return dims  # type: ignore


def _choice(choices):
    def check(instance, attribute, value) -> None:
        if value not in choices:
            raise InvalidConfig('{} must be one of {}, got {!r}'.format(
                attribute.name, ', '.join(choices), value
            ))
    return check


@attr.s(frozen=True, slots=True)
class PhantomSpec():
    """Layout, per-region ground-truth transforms and texture of a phantom.

    Region ``i`` (labels 1..n) moves by ``x -> A_i (x - c) + c + t_i`` with
    ``c`` the grid centre; background stays put.
    """

    dims: Tuple[int, int, int] = attr.ib(converter=_dims)
    n_regions: int = attr.ib(converter=int)
    layout: str = attr.ib(default='half-spaces', validator=_choice(LAYOUTS))
    translations: Tuple[Triple, ...] = attr.ib(default=(), converter=_triples)
    affines: Optional[Tuple[Tuple[float, ...], ...]] = attr.ib(default=None,
                                                             converter=_matrices)
    texture: str = attr.ib(default='smooth', validator=_choice(TEXTURES))
    correlation_length: float = attr.ib(default=4.0, converter=float)
    noise_sigma: float = attr.ib(default=0.0, converter=float)
    seed: int = attr.ib(default=0, converter=int)

    def __attrs_post_init__(self) -> None:
        if self.n_regions < 1:
            raise InvalidConfig('n_regions must be >= 1')
        if not self.translations:
            object.__setattr__(self, 'translations',
                               tuple((0.0, 0.0, 0.0) for _ in range(self.n_regions)))
        if len(self.translations) != self.n_regions:
            raise InvalidConfig('{} translations for {} regions'.format(
                len(self.translations), self.n_regions
            ))
        if self.affines is not None and len(self.affines) != self.n_regions:
            raise InvalidConfig('{} affine matrices for {} regions'.format(
                len(self.affines), self.n_regions
            ))
        if self.correlation_length <= 0:
            raise InvalidConfig('correlation_length must be > 0')
        if self.noise_sigma < 0:
            raise InvalidConfig('noise_sigma must be >= 0')


    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.dims, dtype=np.float64) - 1.0) / 2.0


    def matrix(self, label: int) -> np.ndarray:
        """Linear part of the transform of region ``label`` (1-based)."""
        if self.affines is None:
            return np.eye(3)
        return np.asarray(self.affines[label - 1], dtype=np.float64).reshape(3, 3)


    def translation(self, label: int) -> np.ndarray:
        return np.asarray(self.translations[label - 1], dtype=np.float64)


    def to_dict(self) -> Dict[str, Any]:
        json_obj: Dict[str, Any] = {
            'dims': list(self.dims),
            'n_regions': self.n_regions,
            'layout': self.layout,
            'translations': [list(t) for t in self.translations],
            'texture': self.texture,
            'correlation_length': self.correlation_length,
            'noise_sigma': self.noise_sigma,
            'seed': self.seed,
        }
        if self.affines is not None:
            json_obj['affines'] = [list(a) for a in self.affines]
        return json_obj


    @classmethod
    def from_dict(cls,
                  json_obj: Dict[str, Any]) -> 'PhantomSpec':
        try:
            return cls(**json_obj)
        except TypeError as e:
            raise InvalidConfig('bad phantom spec: {}'.format(e))
        except ValueError as e:
            raise InvalidConfig(str(e))


def _ini_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            return '; '.join(','.join(repr(float(v)) for v in row) for row in value)
        return ','.join(str(v) for v in value)
    return str(value)


def save_spec(spec: PhantomSpec,
              path: Union[str, os.PathLike]) -> None:
    parser = configparser.ConfigParser()
    parser['phantom'] = {
        key: _ini_value(value) for key, value in spec.to_dict().items()
    }
    with open(path, 'w') as f:
        parser.write(f)


def load_spec(path: Union[str, os.PathLike]) -> PhantomSpec:
    parser = configparser.ConfigParser()
    try:
        with open(path, 'r') as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ParseError(getattr(e, 'lineno', 0) or 0,
                         'malformed phantom spec: {}'.format(e))
    if not parser.has_section('phantom'):
        raise ParseError(0, 'phantom spec has no [phantom] section')
    return PhantomSpec.from_dict(dict(parser.items('phantom')))


BUNDLED = {
    'two-region': PhantomSpec(dims=(48, 48, 48),
                              n_regions=2,
                              layout='half-spaces',
                              translations=((-3.0, 0.0, 0.0), (3.0, 0.0, 0.0)),
                              seed=0),
}


def bundled_spec(name: str = 'two-region') -> PhantomSpec:
    if name not in BUNDLED:
        raise InvalidConfig('unknown bundled phantom {!r}; choose from {}'.format(
            name, ', '.join(sorted(BUNDLED))
        ))
    return BUNDLED[name]


def reduced_spec(spec: PhantomSpec,
                 dims: Sequence[int],
                 translations: Optional[Sequence[Sequence[float]]] = None) -> PhantomSpec:
    """Same phantom on a smaller grid, optionally with other translations."""
    data = spec.to_dict()
    data['dims'] = list(dims)
    if translations is not None:
        data['translations'] = [list(t) for t in translations]
    return PhantomSpec.from_dict(data)
