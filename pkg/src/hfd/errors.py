"""Exception types raised across the package."""


class HFDError(Exception):
    """Base class for all package errors."""


class MissingStream(HFDError):
    pass


class SchemaError(HFDError):
    pass


class InvariantViolation(HFDError):
    pass


class EmptyOverlap(HFDError):
    pass


class UnknownPlatform(HFDError):
    pass


class SegmentationAmbiguous(HFDError):
    pass


class SplitSpecError(HFDError):
    pass


class EmptyTrial(HFDError):
    pass


class BackboneContractError(HFDError):
    pass


class ShapeError(HFDError, ValueError):
    pass


class NoLabels(HFDError):
    pass


class TopologyError(HFDError):
    pass


class DivergenceError(HFDError):
    pass


class MissingSegment(HFDError):
    pass


class MissingTarget(HFDError):
    pass


class EmptyTrack(HFDError, ValueError):
    pass


class LengthMismatch(HFDError, ValueError):
    pass


class EmptyList(HFDError, ValueError):
    pass


class ScriptError(HFDError, ValueError):
    pass


class UnsupportedTable(HFDError):
    pass


class ConfigError(HFDError, ValueError):
    pass


class DegenerateChannel(UserWarning):
    """Issued when a force-torque channel has zero variance in the training pool."""
