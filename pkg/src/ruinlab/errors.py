"""Exception hierarchy shared by every ruinlab module."""


class RuinLabError(Exception):
    """Base class for all library errors."""


class InvalidParameters(RuinLabError, ValueError):
    """Model parameters violate their invariants."""


class DegenerateVolatility(RuinLabError, ValueError):
    """A quantity that needs sigma > 0 was requested with sigma = 0."""


class BadUniform(RuinLabError, ValueError):
    pass


class BadGrid(RuinLabError, ValueError):
    pass


class ImmediateRuin(RuinLabError):
    """Raised by single-path simulation when the initial capital is not positive.

    The ruined result (ruin at t = 0) is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class BadCapital(RuinLabError, ValueError):
    pass


class BadInput(RuinLabError, ValueError):
    pass


class DivergentFunctional(RuinLabError, ValueError):
    """The discounted payout functional is infinite almost surely (beta <= 0)."""


class BadB(RuinLabError, ValueError):
    pass


class InconclusiveCert(RuinLabError):
    pass


class MgfDiverges(RuinLabError, ValueError):
    pass


class NonContracting(RuinLabError):
    pass


class NeedsExponentialClaims(RuinLabError, ValueError):
    pass


class NoPowerLawRegime(RuinLabError, ValueError):
    pass


class ModeContamination(RuinLabError):
    """The backward solution changed sign; ``location`` holds the offending u."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class BadTail(RuinLabError):
    pass


class InsufficientData(RuinLabError, ValueError):
    pass


class BadFormat(RuinLabError, ValueError):
    pass


class ConfigError(RuinLabError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class WrongRegime(UserWarning):
    """Soft warning: a beta = 0 construction was requested outside kappa = 0."""
