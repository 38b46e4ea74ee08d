"""Exception types shared across the package.

Each family maps onto one CLI exit code (see ``mmvcf.cli``).
"""


class CFError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CFError, ValueError):
    """A parameter is outside its documented range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class FormatError(CFError, ValueError):
    """A file could not be parsed."""

    def __init__(self, path, field, message):
        self.path = str(path)
        self.field = field
        super().__init__(f"{path}: {field}: {message}")


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class NonFiniteError(FormatError):
    pass


class UnsupportedFormatError(FormatError):
    pass


class TensorIOError(CFError, OSError):
    """Reading or writing a file failed at the OS level."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


class DimensionError(CFError, ValueError):
    """Operands have incompatible shapes."""


class TrainingError(CFError, ValueError):
    """Training data cannot produce a model (e.g. a single class)."""


class NumericalError(CFError, ArithmeticError):
    """Base class for numerical failures."""


class NumericalConsistencyError(NumericalError):
    """A quantity expected to be real carries a large imaginary residual."""


class SingularityError(NumericalError):
    """A per-frequency block is numerically singular."""

    def __init__(self, frequency, min_eig, trace):
        self.frequency = tuple(int(v) for v in frequency)
        self.min_eig = float(min_eig)
        self.trace = float(trace)
        super().__init__(
            f"block at frequency {self.frequency} is singular "
            f"(min eigenvalue {self.min_eig:.3e}, trace {self.trace:.3e})"
        )


class DegeneratePlaneError(NumericalError):
    """Sidelobe region of a correlation plane has zero variance."""


class DegenerateModelError(NumericalError):
    """All dual coefficients are zero, so no filter can be formed."""
