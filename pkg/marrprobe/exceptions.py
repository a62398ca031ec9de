"""
exceptions.py — the error hierarchy shared by every app

Every error carries the exit code the command line maps it to:
  2 configuration, 3 I/O, 4 numerical failure.
Contract and shape errors are programming errors; commands report them as
configuration failures because they are raised from malformed inputs.
"""


class MarrProbeError(Exception):
    exit_code = 1


class ConfigurationError(MarrProbeError, ValueError):
    exit_code = 2


class EmptyResultError(ConfigurationError):
    """A filter or aggregation produced nothing to work on."""


class ShapeError(MarrProbeError, ValueError):
    exit_code = 2

    def __init__(self, message, *shapes):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = tuple(tuple(s) for s in shapes)


class ContractError(MarrProbeError, RuntimeError):
    exit_code = 2


class ArtifactIOError(MarrProbeError, OSError):
    exit_code = 3

    def __init__(self, path, reason="missing or unreadable"):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)


class NumericalError(MarrProbeError, ArithmeticError):
    exit_code = 4
