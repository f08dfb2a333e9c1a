"""Exception hierarchy shared by the library and the CLI.

Exit codes: 2 configuration, 3 data, 4 numerical, 5 budget.
"""


class SlabregError(Exception):
    exit_code = 1


class ConfigError(SlabregError):
    """Invalid or incomplete configuration (missing constants, bad variant...)."""

    exit_code = 2


class DataError(SlabregError):
    """Malformed or out-of-domain input data."""

    exit_code = 3


class NumericalError(SlabregError):
    """Numerical failure: non-finite values, failed decompositions, iteration caps."""

    exit_code = 4


class BudgetError(SlabregError):
    """Wall-clock budget exceeded."""

    exit_code = 5
