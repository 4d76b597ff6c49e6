"""Evaluation-only greedy algorithms for convex minimization over dictionaries."""

from greedyopt.core import (
    Combination,
    Dictionary,
    canonical_dictionary,
    combine,
    make_symmetric_dictionary,
    norm,
)
from greedyopt.errors import (
    BudgetError,
    GreedyOptError,
    InputError,
    InsufficientDataError,
    NonCoerciveError,
    UnsupportedCapabilityError,
)

__all__ = [
    "BudgetError",
    "Combination",
    "Dictionary",
    "GreedyOptError",
    "InputError",
    "InsufficientDataError",
    "NonCoerciveError",
    "UnsupportedCapabilityError",
    "canonical_dictionary",
    "combine",
    "make_symmetric_dictionary",
    "norm",
]

__version__ = "0.1.0"
