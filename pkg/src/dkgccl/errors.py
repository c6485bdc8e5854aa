"""Exception hierarchy.

CLI exit codes map onto the three leaf families: configuration problems (2),
bad input data (3) and numerical failures (4).
"""


class DkgcclError(Exception):
    exit_code = 1


class ConfigError(DkgcclError, ValueError):
    exit_code = 2


class InputError(DkgcclError, ValueError):
    """Malformed or inconsistent input data (edge lists, features, partitions)."""

    exit_code = 3


class ParseError(InputError):
    pass


class NumericalError(DkgcclError, ArithmeticError):
    exit_code = 4


class DegeneratePositiveSetError(NumericalError):
    """A node's community has no positive communities, so its loss term is undefined."""


class UndefinedScoreError(DkgcclError, ValueError):
    pass


class DegenerateProbeError(DkgcclError, ValueError):
    exit_code = 3
