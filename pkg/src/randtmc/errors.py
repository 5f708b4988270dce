"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` used by the command line front end.
"""


class RTMCError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(RTMCError):
    exit_code = 2


class UnknownFixture(ConfigError):
    pass


class NoReturn(RTMCError):
    """The orbit does not come back to the target set."""


class NonFinite(RTMCError):
    pass


class EnumerationOverflow(RTMCError):
    """Word enumeration would exceed the configured cap."""


class NotMixedWithinHorizon(RTMCError):
    exit_code = 3


class BipFailure(RTMCError):
    """Raised when a big images/preimages certificate is rejected."""

    exit_code = 3


class TruncationUnsound(BipFailure):
    pass


class InsufficientWordLength(RTMCError):
    pass


class EmptyFiber(RTMCError):
    pass


class DepthUnderflow(RTMCError):
    pass


class AnchorMissing(RTMCError):
    pass


class HypothesisFail(RTMCError):
    pass


class NoConvergence(RTMCError):
    exit_code = 4


class ZeroRow(RTMCError):
    pass


class NotStochastic(RTMCError):
    pass


class AssertionFailure(RTMCError):
    """A hard numerical assertion did not hold."""

    exit_code = 5


class SandwichViolation(AssertionFailure):
    pass


class DivergentDiagnostics(AssertionFailure):
    pass
