"""Exception types shared by the analysis modules and the CLI exit codes."""


class SewingError(Exception):
    """Base class for all errors raised by sewing3d."""


class InvalidScenario(SewingError, ValueError):
    """Malformed input: bad keys, non-finite values, wrong shapes."""


class TheoryNotApplicable(SewingError, ValueError):
    """A hypothesis of the analysis fails for this system.

    The message names the failed hypothesis so that callers can explain
    why the cylinder/limit-cycle theory says nothing about the input.
    """


class NumericFailure(SewingError, RuntimeError):
    """An internal numeric procedure broke down (NaN, step underflow...)."""
