"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage-type errors exit 2, data errors
exit 3 and numeric failures exit 4.
"""


class HarContamError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class SpecificationError(HarContamError, ValueError):
    """An SLS model description is malformed or inconsistent."""


class UnknownNameError(HarContamError, KeyError):
    """A builtin spec, experiment, kernel or method name was not recognised."""

    exit_code = 2

    def __str__(self):
        # KeyError quotes its argument; keep messages readable.
        return str(self.args[0]) if self.args else ""


class DomainError(HarContamError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class BoundaryError(DomainError):
    """A local estimation window leaves the observed sample."""


class NumericError(HarContamError, ArithmeticError):
    """A computation produced a non-finite or otherwise invalid value."""

    exit_code = 4


class DegenerateVarianceError(NumericError):
    """A long-run variance estimate is zero or negative, so no test exists."""


class UnsupportedModelError(HarContamError, NotImplementedError):
    """The requested analytic quantity is not available for this model."""


class SchemaError(HarContamError, ValueError):
    """Two tables or documents do not share the expected layout."""
