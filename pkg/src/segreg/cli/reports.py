"""Report writers: slice images, loss traces, sweep tables, summaries.
"""

from typing import Dict, List, Sequence, Tuple, Union
import csv
import logging
import os

import numpy as np

from segreg.core.metrics import MetricsReport
from segreg.core.optimizer import LossRow
from segreg.core.volume import LabelMap, Volume


logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

TRACE_HEADER = ('iteration', 'total', 'L_v', 'L_m', 'R')
CONTOUR_VALUE = 255
PLANES = ('axial', 'coronal', 'sagittal')


def mid_slice(array: np.ndarray,
              plane: str) -> np.ndarray:
    """Middle slice normal to z (axial), y (coronal) or x (sagittal)."""
    dx, dy, dz = array.shape
    if plane == 'axial':
        return array[:, :, dz // 2]
    if plane == 'coronal':
        return array[:, dy // 2, :]
    if plane == 'sagittal':
        return array[dx // 2, :, :]
    raise ValueError('unknown plane {!r}'.format(plane))


def window_to_bytes(image: np.ndarray) -> np.ndarray:
    """Linear window from the slice minimum to its maximum, 8 bits."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = float(image.min()), float(image.max())
    if hi <= lo:
        return np.zeros(image.shape, dtype=np.uint8)
    scaled = np.round((image - lo) / (hi - lo) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def label_contours(labels: np.ndarray) -> np.ndarray:
    """In-plane pixels whose label differs from a right or lower neighbour."""
    edges = np.zeros(labels.shape, dtype=bool)
    edges[:-1, :] |= labels[:-1, :] != labels[1:, :]
    edges[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    return edges


def write_pgm(pixels: np.ndarray,
              path: PathLike) -> None:
    """Binary PGM (P5); the first array axis runs left to right."""
    rows = np.ascontiguousarray(np.asarray(pixels, dtype=np.uint8).T)
    height, width = rows.shape
    with open(path, 'wb') as f:
        f.write('P5\n{} {}\n255\n'.format(width, height).encode('ascii'))
        f.write(rows.tobytes())


def write_slices(vol: Volume,
                 seg: LabelMap,
                 out_dir: PathLike,
                 prefix: str = 'warped') -> List[str]:
    """Mid-slice PGMs of ``vol`` plus a second set with ``seg`` contours."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for plane in PLANES:
        pixels = window_to_bytes(mid_slice(vol.as_float(), plane))
        plain = os.path.join(out_dir, '{}_{}.pgm'.format(prefix, plane))
        write_pgm(pixels, plain)
        overlay = pixels.copy()
        overlay[label_contours(mid_slice(seg.labels, plane))] = CONTOUR_VALUE
        contoured = os.path.join(out_dir, '{}_{}_contours.pgm'.format(prefix, plane))
        write_pgm(overlay, contoured)
        written.extend([plain, contoured])
    return written


def write_trace_csv(trace: Sequence[LossRow],
                    path: PathLike) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_HEADER)
        for iteration, row in enumerate(trace):
            writer.writerow([iteration] + ['{:.6f}'.format(v) for v in row])


def write_table_csv(rows: Sequence[Dict[str, float]],
                    columns: Tuple[str, ...],
                    path: PathLike) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def write_gnuplot_dat(rows: Sequence[Dict[str, float]],
                      columns: Tuple[str, ...],
                      path: PathLike) -> None:
    """Whitespace-separated columns with a commented header line."""
    with open(path, 'w') as f:
        f.write('# ' + ' '.join(columns) + '\n')
        for row in rows:
            f.write(' '.join(_cell(row[c]) for c in columns) + '\n')


def _cell(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return '{:.6f}'.format(float(value))


def format_summary(report: MetricsReport) -> str:
    """Human-readable table for stdout."""
    lines = ['{:>6} {:>9} {:>10} {:>9}'.format('label', 'dice', 'hd95_mm', 'sdlogj')]
    for label, metrics in sorted(report.per_label.items()):
        lines.append('{:>6} {:>9} {:>10} {:>9}'.format(
            label,
            '{:.4f}'.format(metrics.dice),
            _maybe(metrics.hd95_mm),
            _maybe(metrics.sdlogj)
        ))
    lines.append('mean dice {:.4f}  sdlogj {}  folds {} ({:.4%})'.format(
        report.mean_dice, _maybe(report.sdlogj),
        report.folding_count, report.folding_fraction
    ))
    return '\n'.join(lines)


def _maybe(value) -> str:
    return 'n/a' if value is None else '{:.4f}'.format(value)
