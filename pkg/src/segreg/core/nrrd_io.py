"""Reader and writer for a strict single-file NRRD subset.

Supported: ``dimension`` 3 (scalar) or 4 (3-vector field, vector axis
last and slowest), ``type`` float/double/uchar/short, ``encoding: raw``,
``endian: little``, ``sizes``, diagonal ``space directions`` and
``space origin``. Everything else is rejected with ``UnsupportedField``.
"""

from typing import Dict, List, Tuple, Union
import logging
import os

import numpy as np

from .errors import ParseError, UnsupportedField
from .fields import DisplacementField, VelocityField
from .grid import Grid
from .volume import LabelMap, Volume


logger = logging.getLogger(__name__)

NrrdObject = Union[Volume, LabelMap, DisplacementField]

_TYPE_NAMES = {
    'float': np.dtype('<f4'),
    'double': np.dtype('<f8'),
    'uchar': np.dtype('u1'),
    'unsigned char': np.dtype('u1'),
    'uint8': np.dtype('u1'),
    'uint8_t': np.dtype('u1'),
    'short': np.dtype('<i2'),
    'short int': np.dtype('<i2'),
    'signed short': np.dtype('<i2'),
    'signed short int': np.dtype('<i2'),
    'int16': np.dtype('<i2'),
    'int16_t': np.dtype('<i2'),
}

_CANONICAL_TYPES = {
    np.dtype('<f4'): 'float',
    np.dtype('<f8'): 'double',
    np.dtype('u1'): 'uchar',
    np.dtype('<i2'): 'short',
}

_SUPPORTED_KEYS = (
    'type',
    'dimension',
    'space dimension',
    'sizes',
    'space directions',
    'space origin',
    'endian',
    'encoding',
)


def _format_vector(values) -> str:
    return '(' + ','.join(repr(float(v)) for v in values) + ')'


def _parse_vector(text: str, line: int) -> List[float]:
    text = text.strip()
    if not (text.startswith('(') and text.endswith(')')):
        raise ParseError(line, 'expected a vector "(a,b,c)", got {!r}'.format(text))
    try:
        return [float(v) for v in text[1:-1].split(',')]
    except ValueError:
        raise ParseError(line, 'malformed vector {!r}'.format(text))


def _header(dtype: np.dtype,
            grid: Grid,
            vector: bool) -> bytes:
    sizes = list(grid.dims) + ([3] if vector else [])
    directions = [
        _format_vector([grid.spacing[axis] if k == axis else 0.0
                        for k in range(3)])
        for axis in range(3)
    ] + (['none'] if vector else [])
    lines = [
        'NRRD0004',
        '# Complete NRRD file format specification at:',
        '# http://teem.sourceforge.net/nrrd/format.html',
        'type: {}'.format(_CANONICAL_TYPES[dtype]),
        'dimension: {}'.format(4 if vector else 3),
        'space dimension: 3',
        'sizes: {}'.format(' '.join(str(s) for s in sizes)),
        'space directions: {}'.format(' '.join(directions)),
        'endian: little',
        'encoding: raw',
        'space origin: {}'.format(_format_vector(grid.origin)),
    ]
    return ('\n'.join(lines) + '\n\n').encode('ascii')


def _label_dtype(labels: np.ndarray) -> np.dtype:
    if labels.dtype in _CANONICAL_TYPES:
        return labels.dtype.newbyteorder('<') if labels.dtype.itemsize > 1 \
            else labels.dtype
    top = int(labels.max()) if labels.size else 0
    if top <= 255:
        return np.dtype('u1')
    if top <= 32767:
        return np.dtype('<i2')
    raise UnsupportedField('type', 'labels above 32767')


def write_nrrd(obj: Union[NrrdObject, VelocityField],
               path: Union[str, os.PathLike]) -> None:
    """Writes a volume, label map or vector field as a raw NRRD file."""
    if isinstance(obj, (DisplacementField, VelocityField)):
        dtype = np.dtype('<f8')
        data = np.moveaxis(obj.vectors, 0, -1)
        vector = True
    elif isinstance(obj, LabelMap):
        dtype = _label_dtype(obj.labels)
        data = obj.labels
        vector = False
    else:
        dtype = obj.samples.dtype.newbyteorder('<') \
            if obj.samples.dtype.itemsize > 1 else obj.samples.dtype
        if dtype not in _CANONICAL_TYPES:
            raise UnsupportedField('type', str(obj.samples.dtype))
        data = obj.samples
        vector = False

    payload = np.asarray(data).astype(dtype, copy=False).ravel(order='F')
    with open(path, 'wb') as fp:
        fp.write(_header(dtype, obj.grid, vector))
        fp.write(payload.tobytes())
    logger.debug('wrote %s (%s, %d bytes of data)',
                 path, _CANONICAL_TYPES[dtype], payload.nbytes)


def _parse_header(raw: bytes) -> Tuple[Dict[str, Tuple[str, int]], int, int]:
    """Returns (fields, data offset, line number of the data segment)."""
    fields: Dict[str, Tuple[str, int]] = {}
    offset = 0
    line_no = 0
    while True:
        end = raw.find(b'\n', offset)
        if end < 0:
            raise ParseError(line_no + 1, 'header is not terminated by a blank line')
        line_no += 1
        try:
            line = raw[offset:end].decode('ascii').rstrip('\r')
        except UnicodeDecodeError:
            raise ParseError(line_no, 'non-ASCII header line')
        offset = end + 1
        if line_no == 1:
            if not line.startswith('NRRD000'):
                raise ParseError(1, 'missing NRRD magic, got {!r}'.format(line[:16]))
            continue
        if not line:
            return fields, offset, line_no + 1
        if line.startswith('#'):
            continue
        if ':=' in line:
            raise UnsupportedField(line.split(':=', 1)[0].strip())
        if ': ' not in line:
            raise ParseError(line_no, 'expected "key: value", got {!r}'.format(line))
        key, value = line.split(': ', 1)
        key = key.strip().lower()
        if key not in _SUPPORTED_KEYS:
            raise UnsupportedField(key)
        if key in fields:
            raise ParseError(line_no, 'duplicate field {!r}'.format(key))
        fields[key] = (value.strip(), line_no)


def read_nrrd(path: Union[str, os.PathLike],
              as_labels: Union[bool, None] = None) -> NrrdObject:
    """Reads a NRRD file written in the supported subset.

    Integer data becomes a ``LabelMap`` when non-negative (or when
    ``as_labels`` is True); float data becomes a ``Volume``; 4D data becomes
    a ``DisplacementField``.
    """
    with open(path, 'rb') as fp:
        raw = fp.read()
    fields, offset, data_line = _parse_header(raw)

    def require(key: str) -> Tuple[str, int]:
        if key not in fields:
            raise ParseError(data_line, 'missing required field {!r}'.format(key))
        return fields[key]

    type_name, type_line = require('type')
    if type_name.lower() not in _TYPE_NAMES:
        raise UnsupportedField('type', type_name)
    dtype = _TYPE_NAMES[type_name.lower()]

    encoding, _ = require('encoding')
    if encoding.lower() != 'raw':
        raise UnsupportedField('encoding', encoding)
    if dtype.itemsize > 1:
        endian, _ = require('endian')
        if endian.lower() != 'little':
            raise UnsupportedField('endian', endian)
    elif 'endian' in fields and fields['endian'][0].lower() not in ('little', 'big'):
        raise ParseError(fields['endian'][1], 'invalid endian value')

    dim_text, dim_line = require('dimension')
    try:
        dimension = int(dim_text)
    except ValueError:
        raise ParseError(dim_line, 'dimension is not an integer')
    if dimension not in (3, 4):
        raise UnsupportedField('dimension', dim_text)
    if 'space dimension' in fields and fields['space dimension'][0] != '3':
        raise UnsupportedField('space dimension', fields['space dimension'][0])

    sizes_text, sizes_line = require('sizes')
    try:
        sizes = [int(s) for s in sizes_text.split()]
    except ValueError:
        raise ParseError(sizes_line, 'sizes are not integers')
    if len(sizes) != dimension or any(s < 1 for s in sizes):
        raise ParseError(sizes_line, 'sizes {} do not match dimension {}'.format(
            sizes, dimension
        ))
    if dimension == 4 and sizes[3] != 3:
        raise UnsupportedField('sizes', sizes_text)

    spacing = [1.0, 1.0, 1.0]
    if 'space directions' in fields:
        text, line = fields['space directions']
        parts = text.split()
        if len(parts) != dimension:
            raise ParseError(line, 'expected {} space directions'.format(dimension))
        if dimension == 4 and parts[3].lower() != 'none':
            raise UnsupportedField('space directions', text)
        for axis in range(3):
            vector = _parse_vector(parts[axis], line)
            if len(vector) != 3:
                raise ParseError(line, 'space direction must have 3 components')
            if any(vector[k] != 0.0 for k in range(3) if k != axis) \
                    or not vector[axis] > 0.0:
                raise UnsupportedField('space directions', text)
            spacing[axis] = vector[axis]
    origin = [0.0, 0.0, 0.0]
    if 'space origin' in fields:
        text, line = fields['space origin']
        origin = _parse_vector(text, line)
        if len(origin) != 3:
            raise ParseError(line, 'space origin must have 3 components')

    count = int(np.prod(sizes))
    data = raw[offset:]
    if len(data) != count * dtype.itemsize:
        raise ParseError(
            data_line,
            'data segment has {} bytes, expected {}'.format(
                len(data), count * dtype.itemsize
            )
        )
    array = np.frombuffer(data, dtype=dtype).reshape(sizes, order='F')
    try:
        grid = Grid(dims=sizes[:3], spacing=spacing, origin=origin)
        if dimension == 4:
            vectors = np.moveaxis(array, -1, 0)
            return DisplacementField(grid=grid, vectors=vectors)
        if as_labels is None:
            as_labels = dtype.kind in 'iu' and (array.size == 0 or array.min() >= 0)
        if as_labels:
            if dtype.kind not in 'iu':
                raise UnsupportedField('type', '{} for a label map'.format(type_name))
            return LabelMap(grid=grid, labels=array)
        return Volume(grid=grid, samples=array)
    except ValueError as e:
        # non-finite samples or negative labels
        raise ParseError(data_line, str(e)) from e
