"""Exception hierarchy shared by all modules."""


class SignedOmasError(Exception):
    """Base class for every error raised by this package."""


class InvalidGraph(SignedOmasError, ValueError):
    pass


class NotConnected(SignedOmasError):
    pass


class DimensionMismatch(SignedOmasError, ValueError):
    pass


class NumericalError(SignedOmasError):
    """A matrix failed a precondition of a numerical routine."""


class NotSymmetric(NumericalError, ValueError):
    pass


class NegativeEigenvalue(NumericalError):
    pass


class SingularEdgeLaplacian(NumericalError):
    pass


class DeflationInsufficient(NumericalError):
    """The deflated matrix R is not positive definite.

    Raised when fewer zero eigenvectors were supplied than the edge
    Laplacian actually has.
    """


class NonpositiveDelta(SignedOmasError, ValueError):
    pass


class ScenarioError(SignedOmasError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(ScenarioError):
    """A scenario parsed but violates a modelling rule.

    ``rule`` names the violated rule, e.g. ``DisconnectedMode``.
    """

    def __init__(self, rule, message):
        self.rule = rule
        super().__init__(f"{rule}: {message}")


class IllegalTransition(ValidationError):
    def __init__(self, message):
        super().__init__("IllegalTransition", message)


class NonMonotoneSchedule(ValidationError):
    def __init__(self, message):
        super().__init__("NonMonotoneSchedule", message)
