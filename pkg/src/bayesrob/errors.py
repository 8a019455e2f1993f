"""Exception hierarchy shared by every module."""


class BayesRobError(Exception):
    """Base class for all toolkit errors."""


class InvalidSpec(BayesRobError):
    """A distribution spec or config violates its declared invariants."""


class NonFiniteDensity(BayesRobError):
    pass


class EmptyClass(BayesRobError):
    pass


class DomainTooSmall(BayesRobError):
    """Too much analytic mass falls outside the requested domain."""

    def __init__(self, message: str, clipped_fraction: float):
        super().__init__(message)
        self.clipped_fraction = clipped_fraction


class ResolutionTooCoarse(BayesRobError):
    pass


class KappaOutOfRange(BayesRobError):
    pass


class UnsupportedNorm(BayesRobError):
    pass


class ModeUnsupported(BayesRobError):
    pass


class DimUnsupported(BayesRobError):
    pass


class MonotonicityViolation(BayesRobError):
    """A kappa sweep produced a decreasing accuracy bound."""

    def __init__(self, message: str, pair: tuple):
        super().__init__(message)
        self.pair = pair


def check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not (0.0 <= kappa < 0.5):
        raise KappaOutOfRange(f"kappa={kappa} outside [0, 0.5)")
    return kappa
