"""Exceptions raised by the SegReg engine.

Every exception carries a machine-readable ``code`` and the process
``exit_code`` the command line surface maps it to.
"""

from typing import Iterable, Optional


EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3


class SegRegException(Exception):
    """Base class for exceptions raised by the engine."""

    code = 'SEGREG_ERROR'
    exit_code = EXIT_VALIDATION

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.region_label: Optional[int] = None


class GridMismatch(SegRegException):
    """Two objects that must share a grid do not."""
    code = 'GRID_MISMATCH'


class LabelNotFound(SegRegException):
    """A requested label is absent from a label map."""
    code = 'LABEL_NOT_FOUND'

    def __init__(self, label: int) -> None:
        super().__init__('label {} not present in label map'.format(label))
        self.label = label


class BoxOutOfRange(SegRegException):
    """A crop box does not fit inside the grid."""
    code = 'BOX_OUT_OF_RANGE'


class ParseError(SegRegException):
    """Malformed NRRD file."""
    code = 'PARSE_ERROR'
    exit_code = EXIT_IO

    def __init__(self, line: int, message: str) -> None:
        super().__init__('line {}: {}'.format(line, message))
        self.line = line


class UnsupportedField(SegRegException):
    """A NRRD header field or value outside the supported subset."""
    code = 'UNSUPPORTED_FIELD'
    exit_code = EXIT_IO

    def __init__(self, key: str, value: str = '') -> None:
        super().__init__(
            'unsupported NRRD field {!r}{}'.format(
                key,
                ' (value {!r})'.format(value) if value else ''
            )
        )
        self.key = key


class MissingRegionField(SegRegException):
    """A fixed-segmentation label has no sub-field to compose."""
    code = 'MISSING_REGION_FIELD'

    def __init__(self, label: int) -> None:
        super().__init__('no displacement field for label {}'.format(label))
        self.label = label


class DuplicateLabel(SegRegException):
    """A label was given more than one sub-field."""
    code = 'DUPLICATE_LABEL'

    def __init__(self, label: int) -> None:
        super().__init__('label {} given more than once'.format(label))
        self.label = label


class AllVoxelsFolded(SegRegException):
    """No voxel has a positive Jacobian determinant."""
    code = 'ALL_VOXELS_FOLDED'


class EmptyRoi(SegRegException):
    """A loss was asked to average over an empty region of interest."""
    code = 'EMPTY_ROI'


class MissingInput(SegRegException):
    """A required input is missing."""
    code = 'MISSING_INPUT'


class EmptyRegion(SegRegException):
    """A region pair has no voxels on one side."""
    code = 'EMPTY_REGION'


class NonFiniteLoss(SegRegException):
    """The optimizer produced a NaN or infinite loss."""
    code = 'NON_FINITE_LOSS'
    exit_code = EXIT_DIVERGENCE

    def __init__(self, iteration: int, level: int) -> None:
        super().__init__(
            'non-finite loss at iteration {} (level factor {})'.format(
                iteration, level
            )
        )
        self.iteration = iteration
        self.level = level


class LabelSetMismatch(SegRegException):
    """Moving and fixed segmentations carry different label sets."""
    code = 'LABEL_SET_MISMATCH'

    def __init__(self, labels: Iterable[int]) -> None:
        self.labels = sorted(set(labels))
        super().__init__(
            'labels present in only one segmentation: {}'.format(self.labels)
        )


class UnmappedLabel(SegRegException):
    """A merge mapping does not cover a label of the map."""
    code = 'UNMAPPED_LABEL'

    def __init__(self, label: int) -> None:
        super().__init__('label {} has no target in the mapping'.format(label))
        self.label = label


class TargetUnreachable(SegRegException):
    """Segmentation degradation cannot reach the requested Dice."""
    code = 'TARGET_UNREACHABLE'


class EmptySurface(SegRegException):
    """HD95 requested for a label with no boundary voxels on one side."""
    code = 'EMPTY_SURFACE'

    def __init__(self, side: str, label: int) -> None:
        super().__init__(
            'label {} has an empty surface in map {!r}'.format(label, side)
        )
        self.side = side
        self.label = label


class SpecInfeasible(SegRegException):
    """A phantom specification cannot be realized on its grid."""
    code = 'SPEC_INFEASIBLE'


class InvalidConfig(SegRegException):
    """A configuration value is out of range."""
    code = 'INVALID_CONFIG'
