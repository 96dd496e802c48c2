"""Exception hierarchy shared by all modules."""


class XModelError(Exception):
    """Base class for every error raised by this package."""


class EmptyCurveError(XModelError, ValueError):
    pass


class OutOfSupportError(XModelError, ValueError):
    pass


class NoCrossingError(XModelError):
    pass


class ParseError(XModelError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ParseError):
    pass


class IrregularDayError(XModelError, ValueError):
    pass


class ConfigError(XModelError, ValueError):
    pass


class EmptyPanelError(XModelError, ValueError):
    pass


class PartitionError(XModelError, ValueError):
    pass


class InsufficientHistoryError(XModelError, ValueError):
    pass


class ConvergenceError(XModelError, RuntimeError):
    def __init__(self, message, lambda_index=None):
        self.lambda_index = lambda_index
        super().__init__(message)


class MissingExogenousError(XModelError, ValueError):
    pass


class ReconstructionError(XModelError):
    pass


class NumericalError(XModelError, ArithmeticError):
    pass


class DegenerateRegimeError(XModelError, RuntimeError):
    pass
