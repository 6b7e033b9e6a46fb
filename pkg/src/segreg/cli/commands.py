"""Command line surface: register, evaluate, phantom, sweep.
"""

from typing import Any, Dict, List, Optional, Sequence
import argparse
import json
import logging
import os
import sys

from segreg.core.config import PRESETS, SegRegConfig, apply_preset, load_config, \
    merge_config, save_config
from segreg.core.errors import EXIT_IO, InvalidConfig, MissingInput, ParseError, \
    SegRegException
from segreg.core.fields import DisplacementField, warp_labelmap
from segreg.core.metrics import compute_report
from segreg.core.nrrd_io import read_nrrd, write_nrrd
from segreg.core.segreg_logger import configure_logging
from segreg.core.volume import LabelMap, Volume
from segreg.phantom.generator import make_phantom
from segreg.phantom.spec import BUNDLED, bundled_spec, load_spec, save_spec
from segreg.pipeline.regions import run_segreg
from segreg.pipeline.sweeps import mode_sweep, segmentation_sweep

from .reports import (
    format_summary, write_gnuplot_dat, write_slices, write_table_csv,
    write_trace_csv
)


logger = logging.getLogger(__name__)

PHANTOM_FILES = ('moving.nrrd', 'fixed.nrrd', 'moving_seg.nrrd',
                 'fixed_seg.nrrd', 'gt_field.nrrd')
DEFAULT_TARGETS = '0.7,0.8,0.9,1.0'


def _require(args: argparse.Namespace,
             *names: str) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise MissingInput('missing required input --{}'.format(
                name.replace('_', '-')
            ))


def _read_volume(path: str) -> Volume:
    obj = read_nrrd(path, as_labels=False)
    if not isinstance(obj, Volume):
        raise ParseError(0, '{} is not a scalar volume'.format(path))
    return obj


def _read_labels(path: str) -> LabelMap:
    obj = read_nrrd(path, as_labels=True)
    if not isinstance(obj, LabelMap):
        raise ParseError(0, '{} is not a label map'.format(path))
    return obj


def _read_field(path: str) -> DisplacementField:
    obj = read_nrrd(path)
    if not isinstance(obj, DisplacementField):
        raise ParseError(0, '{} is not a displacement field'.format(path))
    return obj


def _effective_config(args: argparse.Namespace) -> SegRegConfig:
    """Defaults, then the config file, then the preset, then flags."""
    cfg = SegRegConfig()
    if getattr(args, 'config', None):
        cfg = load_config(args.config, cfg)
    if getattr(args, 'preset', None):
        cfg = apply_preset(cfg, args.preset)
    return merge_config(cfg, {
        'optimizer': {
            'seed': getattr(args, 'seed', None),
            'iterations': getattr(args, 'iterations', None),
            'levels': getattr(args, 'levels', None),
        },
        'pipeline': {
            'threads': getattr(args, 'threads', None),
            'crop_margin': getattr(args, 'crop_margin', None),
        },
    })


def cmd_register(args: argparse.Namespace) -> int:
    _require(args, 'moving', 'fixed', 'moving_seg', 'fixed_seg', 'out_dir')
    cfg = _effective_config(args)
    moving = _read_volume(args.moving)
    fixed = _read_volume(args.fixed)
    moving_seg = _read_labels(args.moving_seg)
    fixed_seg = _read_labels(args.fixed_seg)

    output = run_segreg(moving, fixed, moving_seg, fixed_seg, cfg)

    out_dir = args.out_dir
    os.makedirs(os.path.join(out_dir, 'traces'), exist_ok=True)
    save_config(cfg, os.path.join(out_dir, 'config.ini'))
    write_nrrd(output.field, os.path.join(out_dir, 'field.nrrd'))
    write_nrrd(output.warped, os.path.join(out_dir, 'warped.nrrd'))
    write_nrrd(output.warped_seg, os.path.join(out_dir, 'warped_seg.nrrd'))
    report = output.report
    if args.record_runtime:
        report = report.with_runtime(output.runtime_seconds)
    with open(os.path.join(out_dir, 'metrics.json'), 'w') as f:
        f.write(report.to_json())
    for label, trace in sorted(output.traces.items()):
        write_trace_csv(trace, os.path.join(out_dir, 'traces',
                                            'region_{}.csv'.format(label)))
    write_slices(output.warped, output.warped_seg, os.path.join(out_dir, 'slices'))
    print(format_summary(report))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    _require(args, 'field', 'moving_seg', 'fixed_seg')
    cfg = _effective_config(args)
    field = _read_field(args.field)
    moving_seg = _read_labels(args.moving_seg)
    fixed_seg = _read_labels(args.fixed_seg)
    warped_seg = warp_labelmap(moving_seg, field)
    report = compute_report(warped_seg, fixed_seg, field,
                            cfg.sdlogj_mask, cfg.sdlogj_exclude_folded)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, 'metrics.json'), 'w') as f:
            f.write(report.to_json())
    else:
        sys.stdout.write(report.to_json())
    print(format_summary(report))
    return 0


def cmd_phantom(args: argparse.Namespace) -> int:
    _require(args, 'out_dir')
    if args.spec:
        spec = load_spec(args.spec)
    else:
        spec = bundled_spec(args.bundled)
    if args.seed is not None:
        data = spec.to_dict()
        data['seed'] = args.seed
        spec = type(spec).from_dict(data)
    phantom = make_phantom(spec)

    os.makedirs(args.out_dir, exist_ok=True)
    objects = (phantom.moving, phantom.fixed, phantom.moving_seg,
               phantom.fixed_seg, phantom.gt_field)
    for name, obj in zip(PHANTOM_FILES, objects):
        write_nrrd(obj, os.path.join(args.out_dir, name))
    save_spec(spec, os.path.join(args.out_dir, 'phantom.ini'))
    print('wrote {} files and phantom.ini to {}'.format(len(PHANTOM_FILES),
                                                        args.out_dir))
    return 0


def _parse_targets(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(',') if t.strip()]
    except ValueError:
        raise MissingInput('cannot parse --targets {!r}'.format(text))


def _parse_merges(text: str) -> List[Dict[int, int]]:
    """'1:1,2:1;1:1,2:2' -> [{1: 1, 2: 1}, {1: 1, 2: 2}]."""
    merges = []
    try:
        for group in text.split(';'):
            mapping = {}
            for item in group.split(','):
                if not item.strip():
                    continue
                old, new = item.split(':')
                mapping[int(old)] = int(new)
            merges.append(mapping)
    except ValueError:
        raise MissingInput('cannot parse --merges {!r}'.format(text))
    return merges


def cmd_sweep(args: argparse.Namespace) -> int:
    _require(args, 'out_dir')
    cfg = _effective_config(args)
    if args.moving:
        _require(args, 'fixed', 'moving_seg', 'fixed_seg')
        moving = _read_volume(args.moving)
        fixed = _read_volume(args.fixed)
        moving_seg = _read_labels(args.moving_seg)
        fixed_seg = _read_labels(args.fixed_seg)
    else:
        phantom = make_phantom(bundled_spec(args.phantom))
        moving, fixed = phantom.moving, phantom.fixed
        moving_seg, fixed_seg = phantom.moving_seg, phantom.fixed_seg

    rows: Sequence[Any]
    if args.merges:
        rows = mode_sweep(moving, fixed, moving_seg, fixed_seg,
                          _parse_merges(args.merges), cfg)
        columns = ('n_regions', 'reg_dice')
    else:
        rows = segmentation_sweep(moving, fixed, moving_seg, fixed_seg,
                                  _parse_targets(args.targets), cfg)
        columns = ('seg_dice', 'reg_dice')

    os.makedirs(args.out_dir, exist_ok=True)
    save_config(cfg, os.path.join(args.out_dir, 'config.ini'))
    table = [row.to_dict() for row in rows]
    write_table_csv(table, columns, os.path.join(args.out_dir, 'sweep.csv'))
    write_gnuplot_dat(table, columns, os.path.join(args.out_dir, 'sweep.dat'))
    for row in table:
        print('  '.join('{}={}'.format(c, row[c]) for c in columns))
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--config',
        help='INI config file'
    )
    parser.add_argument(
        '--seed',
        type=int,
        help='random seed'
    )
    parser.add_argument(
        '--debug',
        default=False,
        action='store_true',
        help='set loglevel to DEBUG'
    )
    parser.add_argument(
        '--logfile',
        help='write the log to this file instead of stderr'
    )


def _add_solver(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--preset',
        choices=sorted(PRESETS),
        help='loss preset'
    )
    parser.add_argument(
        '--threads',
        type=int,
        help='regions solved in parallel (default: all cores)'
    )
    parser.add_argument(
        '--crop-margin',
        type=int,
        help='crop every region to its bounding box plus this margin'
    )
    parser.add_argument(
        '--iterations',
        type=int,
        help='iterations per pyramid level'
    )
    parser.add_argument(
        '--levels',
        help='comma separated downsampling factors, coarse to fine'
    )


def _add_inputs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--moving', help='moving image (NRRD)')
    parser.add_argument('--fixed', help='fixed image (NRRD)')
    parser.add_argument('--moving-seg', help='moving label map (NRRD)')
    parser.add_argument('--fixed-seg', help='fixed label map (NRRD)')


class SegRegArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as InvalidConfig instead of exiting."""

    def error(self, message):
        raise InvalidConfig('{}: {}'.format(self.prog, message))


def build_parser() -> argparse.ArgumentParser:
    cmdline_parser = SegRegArgumentParser(
        prog='segreg',
        description='Segmentation-driven, discontinuity-preserving registration.'
    )
    commands = cmdline_parser.add_subparsers(dest='command')

    register = commands.add_parser('register', help='register an image pair')
    _add_inputs(register)
    _add_common(register)
    _add_solver(register)
    register.add_argument('--out-dir', help='output directory')
    register.add_argument(
        '--record-runtime',
        default=False,
        action='store_true',
        help='include runtime_seconds in metrics.json'
    )
    register.set_defaults(handler=cmd_register)

    evaluate = commands.add_parser('evaluate', help='score a displacement field')
    evaluate.add_argument('--field', help='displacement field (NRRD)')
    evaluate.add_argument('--moving-seg', help='moving label map (NRRD)')
    evaluate.add_argument('--fixed-seg', help='fixed label map (NRRD)')
    evaluate.add_argument('--out-dir', help='write metrics.json here')
    _add_common(evaluate)
    evaluate.set_defaults(handler=cmd_evaluate)

    phantom = commands.add_parser('phantom', help='generate a synthetic phantom')
    phantom.add_argument('--spec', help='phantom sidecar file')
    phantom.add_argument(
        '--bundled',
        default='two-region',
        choices=sorted(BUNDLED),
        help='bundled phantom used when --spec is not given'
    )
    phantom.add_argument('--out-dir', help='output directory')
    _add_common(phantom)
    phantom.set_defaults(handler=cmd_phantom)

    sweep = commands.add_parser('sweep', help='segmentation or label-merge sweep')
    _add_inputs(sweep)
    _add_common(sweep)
    _add_solver(sweep)
    sweep.add_argument(
        '--phantom',
        default='two-region',
        choices=sorted(BUNDLED),
        help='bundled phantom used when no inputs are given'
    )
    sweep.add_argument(
        '--targets',
        default=DEFAULT_TARGETS,
        help='comma separated segmentation Dice targets'
    )
    sweep.add_argument(
        '--merges',
        help="label groupings for a mode sweep, e.g. '1:1,2:1;1:1,2:2'"
    )
    sweep.add_argument('--out-dir', help='output directory')
    sweep.set_defaults(handler=cmd_sweep)
    return cmdline_parser


def _report_error(code: str,
                  message: str,
                  region_label: Optional[int]) -> None:
    sys.stderr.write(json.dumps({'error': code,
                                 'message': message,
                                 'region_label': region_label}) + '\n')


def main(argv: Optional[Sequence[str]] = None) -> int:
    cmdline_parser = build_parser()
    try:
        args = cmdline_parser.parse_args(argv)
    except InvalidConfig as e:
        _report_error(e.code, str(e), None)
        return e.exit_code
    if args.command is None:
        cmdline_parser.print_help()
        return 0

    if args.debug:
        loglevel = logging.DEBUG
    else:
        loglevel = logging.INFO
    configure_logging(loglevel, args.logfile)

    try:
        return args.handler(args)
    except SegRegException as e:
        _report_error(e.code, str(e), e.region_label)
        return e.exit_code
    except OSError as e:
        _report_error('IO_ERROR', str(e), None)
        return EXIT_IO
