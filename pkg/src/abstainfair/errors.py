"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`AbstainFairError` so callers
(and the CLI) can distinguish our validation failures from genuine bugs.
"""


class AbstainFairError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AbstainFairError):
    """A ProblemConfig field violates its invariant; the message names the field."""


class MissingGroup(AbstainFairError):
    """A group index in [0, K) has no samples."""

    def __init__(self, group: int):
        self.group = group
        super().__init__(f"group {group} has no samples")


class NonUniformWeights(AbstainFairError):
    """Sample weights within a group differ but the weighted-objective flag is off."""


class DimensionMismatch(AbstainFairError):
    """A vector length does not match the LP or model dimensions."""


class SolverFailure(AbstainFairError):
    """The LP solver did not return an Optimal status."""

    def __init__(self, status, message: str = ""):
        self.status = status
        super().__init__(message or f"solver returned status {status}")


class CertificateFailure(AbstainFairError):
    """An optimality certificate check failed; carries the offending row."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message)


class GridTooCoarse(AbstainFairError):
    """Grid refinement ran into the search box boundary."""


class GroupOutOfRange(AbstainFairError):
    """A prediction was requested for a group index outside [0, K)."""

    def __init__(self, group: int, K: int):
        self.group = group
        self.K = K
        super().__init__(f"group index {group} outside [0, {K})")


class ZeroMassEvent(AbstainFairError):
    """A conditional population quantity has a zero-mass conditioning event."""


class LengthMismatch(AbstainFairError):
    """Decision and test sequences have different lengths."""


class EmptyPartition(AbstainFairError):
    """A split left some group without samples in one of the parts."""


class NonNumericFeature(AbstainFairError):
    """A feature column contains a value that does not parse as a finite float."""


class NoLabelColumn(AbstainFairError):
    """Training data has no label column."""


class ScoreFileError(AbstainFairError):
    """A score/feature CSV violates the file format; carries the 1-based row."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConstraintWarning(UserWarning):
    """A post-fit sanity check failed (possible with tied effective scores)."""
