"""Exception hierarchy shared across the package."""


class TSRError(Exception):
    """Base class for all package errors."""


class DomainError(TSRError, ValueError):
    """Time outside the clipped evaluation domain."""


class ParameterError(TSRError, ValueError):
    """Invalid numeric parameter (nonpositive k, empty input, shape mismatch)."""


class UnsupportedScheduleError(TSRError, ValueError):
    """Operation not defined for the given schedule kind."""


class PolicyMisuseError(TSRError, ValueError):
    """Rescale policy applied somewhere it has no meaning."""


class ConfigurationError(TSRError, ValueError):
    """Incompatible sampler / schedule / policy combination or bad config."""


class UnsupportedRegimeError(TSRError, ValueError):
    """Parameters outside the regime a bound is stated for (e.g. k < 1)."""
