"""Exception hierarchy.

Each error class carries the CLI exit code it maps to: 2 for configuration
problems, 3 for data problems, 4 when inputs fall outside the regime where the
closed-form guarantees hold.
"""


class GibbsPCAError(ValueError):
    exit_code = 1


class ConfigError(GibbsPCAError):
    exit_code = 2


class DataError(GibbsPCAError):
    exit_code = 3


class RegimeError(GibbsPCAError):
    exit_code = 4


class EmptyDataset(DataError):
    pass


class TooFewSamples(DataError):
    pass


class NotSymmetric(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MissingSampleCount(DataError):
    pass


class RankOutOfRange(ConfigError):
    pass


class DomainError(ConfigError):
    pass


class NonpositiveBudget(ConfigError):
    pass


class UnsupportedDimension(ConfigError):
    pass


class PoleViolation(RegimeError):
    pass


class DegenerateGap(RegimeError):
    pass


class OutOfRegime(RegimeError):
    pass


class InfeasibleTarget(RegimeError):
    pass


class ChainInitFailure(RegimeError):
    pass


class NormViolationWarning(UserWarning):
    """A data point exceeds the sqrt(p) norm bound the privacy analysis assumes."""
