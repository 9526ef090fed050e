"""Exception hierarchy shared by every module."""


class FreqSwapError(Exception):
    """Base class for all errors raised by freqswap."""


class ParameterDomainError(FreqSwapError, ValueError):
    """Source parameters outside their physical domain."""


class TruncationError(FreqSwapError):
    """Grid too narrow for the amplitude it is asked to hold."""


class ContractViolation(FreqSwapError, ValueError):
    """Inputs break a documented precondition (grids, normalization, ordering)."""


class DegenerateHeraldError(FreqSwapError):
    """Herald frequency so far detuned that the conditional slice vanishes."""


class NullStateError(FreqSwapError):
    """The heralded state is null (e.g. identical herald bins)."""


class CoverageError(FreqSwapError):
    """A filter bank does not tile the support it is supposed to cover."""


class ConfigurationError(FreqSwapError, ValueError):
    """Invalid configuration of a filter bank, run or detector."""


class InvalidBackgroundError(FreqSwapError, ValueError):
    """Background level exceeding the signal it is subtracted from."""


class FitError(FreqSwapError):
    """A least-squares fit could not be carried out."""
