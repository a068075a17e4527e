"""Exception hierarchy shared by all solver and prover layers."""

from __future__ import annotations


class SetraError(Exception):
    """Base class for every error raised by this package."""


class ParseError(SetraError):
    def __init__(self, message, span=None):
        super().__init__(message)
        self.span = span


class SortError(SetraError):
    """A term or constraint violates the sort discipline."""

    def __init__(self, message, span=None):
        super().__init__(message)
        self.span = span


class SortConflict(SortError):
    """A variable is required to be both a set and a non-set object."""


class UnboundVariable(SetraError):
    pass


class BudgetTooLarge(SetraError):
    """The enumeration search space exceeds the configured cap."""


class WitnessFailure(SetraError):
    """The empty-set heuristic could not be adjusted into a model."""


class NegationUnavailable(SetraError):
    """A constraint kind has no negated counterpart."""


class DuplicateTheorem(SetraError):
    pass


class OutOfScopeVariable(SetraError):
    pass


class NotAConjunction(SetraError):
    pass


class HypothesisNotFound(SetraError):
    def __init__(self, constraint):
        super().__init__(f"hypothesis not found: {constraint}")
        self.constraint = constraint


class NotDefinable(SetraError):
    pass


class LastArgNotFresh(SetraError):
    pass


class ArgOutOfScope(SetraError):
    pass


class NoCharacterization(SetraError):
    pass


class ThesisNotAtomic(SetraError):
    pass


class NoCounterexample(SetraError):
    pass


class DanglingCommand(SetraError):
    def __init__(self, message, span=None):
        super().__init__(message)
        self.span = span


class ScriptError(SetraError):
    """A proof-script command failed; carries the 0-based command index."""

    def __init__(self, index, cause):
        super().__init__(f"command {index} failed: {cause}")
        self.index = index
        self.cause = cause
