"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`EvoshiftError`, so scenario runners can catch one type and keep
going.
"""


class EvoshiftError(Exception):
    """Base class for all package errors."""


# model
class NoInteriorMaximum(EvoshiftError):
    pass


class NonPositiveMaximum(EvoshiftError):
    pass


class NonPositivePressure(EvoshiftError):
    pass


# discretization
class InvalidGrid(EvoshiftError):
    pass


# pde engine
class PositivityLoss(EvoshiftError):
    pass


class StepRejected(EvoshiftError):
    pass


class OverflowRisk(EvoshiftError):
    pass


# floquet
class NoConvergence(EvoshiftError):
    pass


class DegenerateMode(EvoshiftError):
    pass


class NonviablePopulation(EvoshiftError):
    pass


# asymptotics
class NoRoot(EvoshiftError):
    pass


class AmbiguousRoot(EvoshiftError):
    pass


class NegativeRadicand(EvoshiftError):
    pass


class DegenerateCurvature(EvoshiftError):
    pass


# runner
class ParseError(EvoshiftError):
    """Config file could not be parsed; carries the offending line if known."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class ValidationError(EvoshiftError):
    """All violated config constraints, collected before raising."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


class IoError(EvoshiftError):
    def __init__(self, message, path):
        self.path = path
        super().__init__(f"{message}: {path}")
