"""Distributed sparse normal means: support recovery protocols with exact bit accounting."""

from .bounds import Algorithm, TunedParams
from .codec import BitString, approx, index_bits, trunc
from .model import SeedSpec, SparseProblem, make_problem, mu_min, sample_machine
from .protocols import BitLedger, run_pi, run_threshold, run_topl

__all__ = [
    "Algorithm",
    "TunedParams",
    "BitString",
    "approx",
    "index_bits",
    "trunc",
    "SeedSpec",
    "SparseProblem",
    "make_problem",
    "mu_min",
    "sample_machine",
    "BitLedger",
    "run_pi",
    "run_threshold",
    "run_topl",
]

__version__ = "0.1.0"
