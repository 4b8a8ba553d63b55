"""Rate functions, ladder variables and constant-rate laws on discrete posets."""

from .distributions import Pdf, check_constant_rate, rate, upf_from_pdf
from .errors import PosetRateError
from .poset import Poset, build_poset, classify, cumulative, mobius
from .trees import TreeLaw, constant_rate_law, kary

__all__ = [
    "Pdf",
    "Poset",
    "PosetRateError",
    "TreeLaw",
    "build_poset",
    "check_constant_rate",
    "classify",
    "constant_rate_law",
    "cumulative",
    "kary",
    "mobius",
    "rate",
    "upf_from_pdf",
]
__version__ = "0.1.0"
