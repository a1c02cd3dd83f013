"""
Exception hierarchy shared by every opennmpc package.

Numerical failures that a caller is expected to recover from (indefinite
factorizations, model blow-up) are raised as ``NumericalException`` subclasses.
Solver outcomes that are part of normal operation (QP MaxIter, SQP MaxIter,
exhausted line searches) are reported through status fields instead.
"""


class OpenNMPCException(Exception):
    """Base exception for all opennmpc errors"""
    pass


class NumericalException(OpenNMPCException):
    """Custom exception for numerical failures in kernels, models and solvers"""
    pass


class NotPositiveDefiniteError(NumericalException):
    """Raised when a Cholesky pivot is not strictly positive"""

    def __init__(self, message: str, pivot_index: int = -1, pivot_value: float = float("nan")):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class DimensionMismatchError(NumericalException):
    """Raised when operands are not conformable"""
    pass


class NonFiniteStateError(NumericalException):
    """Raised when a state, covariance or integrator stage contains NaN/Inf"""

    def __init__(self, message: str, t: float = float("nan")):
        super().__init__(message)
        self.t = t


class DomainError(NumericalException):
    """Raised when a model is evaluated outside its physical domain"""
    pass


class LengthMismatchError(NumericalException):
    """Raised when paired trajectories do not have the same length"""
    pass


class ConfigException(OpenNMPCException):
    """Custom exception for configuration related errors"""
    pass


class ConfigParseError(ConfigException):
    """Raised when a config file cannot be parsed; carries the location"""

    def __init__(self, message: str, path: str = "", line: int = 0, column: int = 0):
        location = f"{path}:{line}:{column}" if line else path
        super().__init__(f"{location}: {message}" if location else message)
        self.path = path
        self.line = line
        self.column = column


class ConfigValidationError(ConfigException):
    """Raised when a config value violates an invariant; names the field"""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
