"""Exception types shared across the pipeline."""


class BridgecapError(Exception):
    """Base class for errors raised by this package."""


class FormatError(BridgecapError):
    """Input bytes or text do not conform to the declared file format."""


class ConfigError(BridgecapError):
    """A config file, profile, preset, or descriptor is invalid."""


class DomainError(BridgecapError, ValueError):
    """An argument is outside the operation's declared domain."""


class DegenerateKeyError(DomainError):
    """A structure number normalizes to an empty join key."""


class TrainingDivergedError(BridgecapError):
    """Loss became non-finite during training."""


class InvariantError(BridgecapError):
    """An internal consistency check failed; indicates a bug."""
