"""Branching processes with geometric offspring in a heavy-tailed random
environment: exact identities, tail asymptotics, and rare-event Monte Carlo."""

from .exceptions import (
    BpreError,
    KappaUndefinedError,
    LawError,
    LawParseError,
    QuadratureError,
    StepCapExceededError,
)
from .heavytail import (
    LogNormalShift,
    ParetoShift,
    TailLaw,
    TwoPoint,
    WeibullShift,
    law_spec,
    parse_law,
)

__version__ = "0.1.0"

__all__ = [
    "BpreError",
    "KappaUndefinedError",
    "LawError",
    "LawParseError",
    "QuadratureError",
    "StepCapExceededError",
    "LogNormalShift",
    "ParetoShift",
    "TailLaw",
    "TwoPoint",
    "WeibullShift",
    "law_spec",
    "parse_law",
    "__version__",
]
