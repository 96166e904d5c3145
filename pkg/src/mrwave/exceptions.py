"""Exception hierarchy shared by all mrwave modules."""


class MrwaveError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(MrwaveError, ValueError):
    pass


class KnotError(InvalidArgumentError):
    """Knot sequence violates strict monotonicity or simple-knot rules."""


class DecompositionError(MrwaveError):
    """Grid too small for a wavelet decomposition step."""


class NetlistParseError(MrwaveError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class CircuitError(MrwaveError):
    pass


class NumericError(MrwaveError, FloatingPointError):
    """Non-finite values encountered during device evaluation."""


class SingularMatrixError(MrwaveError, ArithmeticError):
    def __init__(self, message, block=None):
        self.block = block
        super().__init__(message)


class ConvergenceError(MrwaveError):
    """Newton iteration failed; carries the best iterate seen."""

    def __init__(self, message, best=None, report=None):
        self.best = best
        self.report = report
        super().__init__(message)


class DegenerateFrequencyError(MrwaveError):
    """The frequency direction is unobservable (z~ is numerically zero)."""


class StateError(MrwaveError):
    pass


class SimulationAbort(MrwaveError):
    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)


class InitializationError(MrwaveError):
    pass


class OperatingPointError(MrwaveError):
    pass


class RangeError(MrwaveError, ValueError):
    pass


class ExportError(MrwaveError):
    pass
