"""Exception hierarchy shared by all stages."""


class QPatternError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class InvalidArgument(QPatternError, ValueError):
    pass


class CircuitParseError(QPatternError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedGate(QPatternError):
    pass


class RoutingRequired(QPatternError):
    """A two-qubit interaction does not lie on the coupling graph."""


class CapacityError(QPatternError):
    pass


class DegenerateModel(QPatternError):
    """The noise model predicts no deviation from the ideal distribution."""


class RejectedSwap(QPatternError):
    pass


class MigrationError(QPatternError):
    pass


class UndefinedCorrelation(QPatternError, ValueError):
    pass


class DatabaseParseError(QPatternError):
    pass
