"""Exception hierarchy shared by all modules."""


class GreedyOptError(Exception):
    pass


class InputError(GreedyOptError, ValueError):
    """Malformed or out-of-range input."""


class UnsupportedCapabilityError(GreedyOptError):
    """The oracle does not provide the requested capability (e.g. a gradient)."""


class BudgetError(GreedyOptError):
    """A requested computation would exceed its evaluation budget."""


class NonCoerciveError(GreedyOptError):
    """An expanding search never found an interior minimizer."""


class InsufficientDataError(GreedyOptError):
    """Too few usable points to fit a rate."""
