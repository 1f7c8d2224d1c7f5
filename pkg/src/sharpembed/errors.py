"""Exception hierarchy shared by the construction and integration code."""


class SharpEmbedError(Exception):
    """Base class for all package errors."""


class DomainError(SharpEmbedError, ValueError):
    """An argument lies outside the domain of an operation."""


class StepTooLargeError(DomainError):
    """|V(n)/sin(pi k)| >= 1/2, so the nearest-branch angle update is not justified."""

    def __init__(self, n, ratio):
        self.n = n
        self.ratio = ratio
        super().__init__(f"step too large at site n={n}: |V/sin(pi k)| = {ratio:.6g} >= 1/2")


class InvariantViolation(SharpEmbedError, AssertionError):
    """A numerical invariant that should hold exactly was broken."""


class NumericFailure(SharpEmbedError, ArithmeticError):
    def __init__(self, n, message="non-finite value"):
        self.n = n
        super().__init__(f"{message} at site n={n}")


class ConstructionError(SharpEmbedError):
    """Base class for failures while building a potential."""


class PhaseSetterSingularError(ConstructionError):
    pass


class PhaseLockLostError(ConstructionError):
    def __init__(self, m, theta, window):
        self.m = m
        self.theta = theta
        super().__init__(f"phase lock lost in period m={m}: theta={theta!r} outside window {window}")


class DegeneratePeriodError(ConstructionError):
    pass


class ConstructionImpossibleError(ConstructionError):
    pass


class SegmentTooShortError(ConstructionError):
    pass


class ConstructionFailedError(ConstructionError):
    pass
