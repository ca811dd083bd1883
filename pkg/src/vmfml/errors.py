"""Exception hierarchy.

Errors are grouped into three families so the command line front end can map
them onto exit codes: configuration problems, bad input data and numeric
failures.
"""


class VmfError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VmfError):
    pass


class DataError(VmfError):
    pass


class NumericError(VmfError):
    pass


# numeric
class ZeroNorm(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


class DegenerateResultant(NumericError):
    pass


# argument / shape problems raised by the math modules
class DomainError(VmfError, ValueError):
    pass


class DimensionMismatch(VmfError, ValueError):
    pass


class LabelOutOfRange(VmfError, ValueError):
    pass


class LengthMismatch(VmfError, ValueError):
    pass


class InvalidK(VmfError, ValueError):
    pass


class InvalidConfig(ConfigError, ValueError):
    pass


class StaleCache(VmfError, ValueError):
    pass


class InsufficientData(DataError):
    pass


class EmptyCluster(VmfError):
    pass


# file formats
class BadMagic(DataError):
    pass


class TruncatedFile(DataError):
    pass


class CountMismatch(DataError):
    pass


class RaggedRow(DataError):
    pass


class NonNumericField(DataError):
    pass


class SparseLabels(DataError):
    pass
