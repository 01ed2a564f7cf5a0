"""Exception hierarchy.

Every error raised for bad user input derives from :class:`KmdError`, which
the CLI maps to exit status 2.
"""


class KmdError(ValueError):
    """Base class for validation errors."""


class InvalidClassCount(KmdError):
    pass


class InvalidKernel(KmdError):
    pass


class InvalidK(KmdError):
    pass


class InvalidMetric(KmdError):
    pass


class ShapeError(KmdError):
    pass


class DegenerateDenominator(KmdError):
    pass


class SampleTooSmall(KmdError):
    pass


class DegenerateTest(KmdError):
    pass


class InvalidDensity(KmdError):
    pass


class InvalidChannel(KmdError):
    pass


class InvalidModel(KmdError):
    pass


class UnknownScenario(KmdError):
    pass


class InconsistencyError(ArithmeticError):
    """A quantity that is nonnegative by construction came out negative."""


class InputFormatError(KmdError):
    """Malformed input file."""
