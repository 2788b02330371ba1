"""Exception hierarchy shared across the package."""


class TubesegError(Exception):
    """Base class for all domain errors raised by this package."""


class DimensionError(TubesegError):
    """Operands have incompatible shapes."""


class ContractError(TubesegError):
    """An operation was invoked outside its contract (e.g. non-scalar loss)."""


class GradCheckError(TubesegError):
    """The finite-difference verifier hit a non-finite objective."""


class FormatError(TubesegError):
    """A container file is malformed (bad magic, version, or truncation)."""


class ValidationError(TubesegError):
    """Loaded data violates an annotation invariant."""


class ConfigError(TubesegError):
    """Invalid model or training configuration."""


class CheckpointError(TubesegError):
    """Checkpoint does not match the expected parameter shapes."""


class CapacityError(TubesegError):
    """More ground-truth things than available thing slots."""


class AugmentationError(TubesegError):
    """Copy-paste sources are incompatible with the target clip."""


class StitchError(TubesegError):
    """Clip results passed to stitching are misaligned."""


class ParameterError(TubesegError):
    """Degenerate generator or metric parameters."""
