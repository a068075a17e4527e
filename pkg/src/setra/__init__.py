"""Satisfiability solving for finite hybrid sets and set relation
algebra, with an interactive theorem prover on top."""

from . import derived as _derived  # noqa: F401  (rule registration)
from .solve import (
    Budget,
    Counterexample,
    Proved,
    ProveUnknown,
    Sat,
    SolvedForm,
    Unknown,
    Unsat,
    extract_witness,
    is_solved_form,
    prove_valid,
    solve,
)
from .parser import parse_formula, parse_theorem_file, pretty

__version__ = "0.1.0"

__all__ = [
    "Budget",
    "Counterexample",
    "Proved",
    "ProveUnknown",
    "Sat",
    "SolvedForm",
    "Unknown",
    "Unsat",
    "extract_witness",
    "is_solved_form",
    "prove_valid",
    "solve",
    "parse_formula",
    "parse_theorem_file",
    "pretty",
    "__version__",
]
