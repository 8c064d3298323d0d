"""Exception types shared across the toolkit.

The CLI maps these onto exit codes, so each one names a failure class
rather than a call site.
"""


class UsageError(ValueError):
    """Caller supplied arguments that violate an operation's preconditions."""


class DataQualityError(ValueError):
    """Input data is present but too damaged or disordered to analyse."""


class DegenerateFitError(UsageError):
    """A fit was requested on data that carries no signal (e.g. all zeros)."""


class AddressParseError(ValueError):
    """A dotted-quad address could not be parsed."""

    def __init__(self, text):
        super().__init__(f"malformed IPv4 address: {text!r}")
        self.text = text
