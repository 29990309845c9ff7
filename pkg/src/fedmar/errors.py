"""Exception types raised across the package."""


class FedmarError(Exception):
    """Base class for all package-specific errors."""


class SingularSystem(FedmarError):
    """A symmetric positive-definite solve failed (rank-deficient Gram matrix)."""


class DegenerateHistory(FedmarError):
    """Not enough history matrices to form at least one training pair."""


class RidgeExhausted(FedmarError):
    """Gram inversion kept failing after escalating the ridge to its cap."""


class DimensionMismatch(FedmarError):
    """Operand shapes or client maps do not agree."""


class InvalidDimension(FedmarError):
    """Requested a coordinate sample outside the valid range."""


class InvalidK(FedmarError):
    """Top-k selection asked for more clients than have defined scores."""


class OvertrimError(FedmarError):
    """Trimming removed every value at some coordinate."""


class TooFewClients(FedmarError):
    """An aggregation rule's minimum client-count precondition is violated."""


class AllFiltered(FedmarError):
    """A spectral filter marked every client as an outlier."""


class DegenerateStatistics(FedmarError):
    """An attack needs benign statistics that cannot be computed."""


class TooFewExamples(FedmarError):
    """A dataset is too small to partition across the requested clients."""


class BadMagic(FedmarError):
    """A binary file does not start with the expected magic number."""


class TruncatedFile(FedmarError):
    """A binary file ended before its declared payload."""


class CountMismatch(FedmarError):
    """Item counts declared by paired files disagree or are unusable."""


class DegenerateSeries(FedmarError):
    """A series is unusable for information estimates (too short)."""


class DegenerateSample(FedmarError):
    """A statistical test received samples it cannot handle."""


class InvalidCounts(FedmarError):
    """Population/draw counts passed to a combinatorial routine are inconsistent."""


class ConfigError(FedmarError):
    """A run configuration failed to parse or validate."""


class CapExceeded(ConfigError):
    """A sweep would expand to more runs than the configured cap."""


class MissingArtifact(FedmarError):
    """An analysis mode needs an output file the run did not produce."""
