"""Sorted terms, constraints and formulas for the set/relation constraint language.

Terms are immutable values: they can be shared freely between threads and
used as dictionary keys.  The only mutable object in this module is
:class:`VarGen`, which is confined to one solving session.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional, Union

from .errors import NegationUnavailable, SortError


class Sort(Enum):
    SET = "set"
    O = "o"

    def __repr__(self):
        return "Sort.SET" if self is Sort.SET else "Sort.O"


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int
    line: int
    column: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("span start must not exceed end")


# Spans never participate in structural equality: two terms parsed from
# different places in a file still compare equal.
def _span_field():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    sort: Sort
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class UrFunctor:
    """Uninterpreted Herbrand constructor; constants are the 0-ary case."""

    name: str
    args: tuple = ()
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class EmptySet:
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class ExtSet:
    """{elem | rest}: the set {elem} U rest, stored right-nested."""

    elem: "Term"
    rest: "Term"
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class CartProd:
    left: "Term"
    right: "Term"
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class Pair:
    first: "Term"
    second: "Term"
    span: Optional[SourceSpan] = _span_field()


Term = Union[Var, UrFunctor, EmptySet, ExtSet, CartProd, Pair]

EMPTY = EmptySet()

# Reserved prefix for solver-generated variables; the parser rejects user
# identifiers starting with it, so fresh names can never collide.
FRESH_PREFIX = "_"


def ur(name: str, *args: Term) -> UrFunctor:
    return UrFunctor(name, tuple(args))


def ext(*elems: Term, rest: Term = EMPTY) -> Term:
    """Build {e1,...,en | rest} right-nested."""
    out = rest
    for e in reversed(elems):
        out = ExtSet(e, out)
    return out


# ---------------------------------------------------------------------------
# Constraint kinds


# Argument-position requirements.  REL positions are SET positions whose
# variables additionally denote binary relations (used by sort inference).
SET_ARG = "set"
REL_ARG = "rel"
ANY_ARG = "any"


@dataclass(frozen=True)
class KindInfo:
    name: str
    args: tuple
    negation: Optional[str]
    derived: bool = False


def _k(name, args, negation, derived=False):
    return name, KindInfo(name, tuple(args), negation, derived)


KINDS: dict = dict(
    [
        _k("eq", (ANY_ARG, ANY_ARG), "neq"),
        _k("neq", (ANY_ARG, ANY_ARG), "eq"),
        _k("in", (ANY_ARG, SET_ARG), "nin"),
        _k("nin", (ANY_ARG, SET_ARG), "in"),
        _k("un", (SET_ARG, SET_ARG, SET_ARG), "nun"),
        _k("nun", (SET_ARG, SET_ARG, SET_ARG), "un"),
        _k("disj", (SET_ARG, SET_ARG), "ndisj"),
        _k("ndisj", (SET_ARG, SET_ARG), "disj"),
        _k("set", (ANY_ARG,), "nset"),
        _k("nset", (ANY_ARG,), "set"),
        _k("rel", (SET_ARG,), "nrel"),
        _k("nrel", (SET_ARG,), "rel"),
        _k("pair", (ANY_ARG,), "npair"),
        _k("npair", (ANY_ARG,), "pair"),
        # id(A, R): R is the identity relation on A.
        _k("id", (SET_ARG, REL_ARG), "nid"),
        _k("nid", (SET_ARG, REL_ARG), "id"),
        # inv(R, S): S is the converse of R.
        _k("inv", (REL_ARG, REL_ARG), "ninv"),
        _k("ninv", (REL_ARG, REL_ARG), "inv"),
        # comp(R, S, T): T = R ; S (relational composition).
        _k("comp", (REL_ARG, REL_ARG, REL_ARG), "ncomp"),
        _k("ncomp", (REL_ARG, REL_ARG, REL_ARG), "comp"),
        # --- derived operators ---
        _k("inters", (SET_ARG, SET_ARG, SET_ARG), "ninters", True),
        _k("ninters", (SET_ARG, SET_ARG, SET_ARG), "inters", True),
        _k("diff", (SET_ARG, SET_ARG, SET_ARG), "ndiff", True),
        _k("ndiff", (SET_ARG, SET_ARG, SET_ARG), "diff", True),
        _k("subset", (SET_ARG, SET_ARG), "nsubset", True),
        _k("nsubset", (SET_ARG, SET_ARG), "subset", True),
        # dom(R, D): D is the domain of R; ran(R, E): E is the range of R.
        _k("dom", (REL_ARG, SET_ARG), "ndom", True),
        _k("ndom", (REL_ARG, SET_ARG), "dom", True),
        _k("ran", (REL_ARG, SET_ARG), "nran", True),
        _k("nran", (REL_ARG, SET_ARG), "ran", True),
        # dres(A, R, S): S = A <| R; rres(R, A, S): S = R |> A.
        # The anti-restrictions have no negated counterparts.
        _k("dres", (SET_ARG, REL_ARG, REL_ARG), None, True),
        _k("rres", (REL_ARG, SET_ARG, REL_ARG), None, True),
        _k("dares", (SET_ARG, REL_ARG, REL_ARG), None, True),
        _k("rares", (REL_ARG, SET_ARG, REL_ARG), None, True),
        # rimg(R, A, B): B is the image of A through R.
        _k("rimg", (REL_ARG, SET_ARG, SET_ARG), "nrimg", True),
        _k("nrimg", (REL_ARG, SET_ARG, SET_ARG), "rimg", True),
        # oplus(R, S, T): T = R overridden by S.
        _k("oplus", (REL_ARG, REL_ARG, REL_ARG), "noplus", True),
        _k("noplus", (REL_ARG, REL_ARG, REL_ARG), "oplus", True),
        _k("pfun", (REL_ARG,), "npfun", True),
        _k("npfun", (REL_ARG,), "pfun", True),
        # apply(F, X, Y): F is a partial function and F(X) = Y.
        _k("apply", (REL_ARG, ANY_ARG, ANY_ARG), "napply", True),
        _k("napply", (REL_ARG, ANY_ARG, ANY_ARG), "apply", True),
    ]
)


@dataclass(frozen=True)
class Constraint:
    kind: str
    args: tuple
    span: Optional[SourceSpan] = _span_field()

    def __post_init__(self):
        info = KINDS.get(self.kind)
        if info is None:
            raise ValueError(f"unknown constraint kind: {self.kind}")
        if len(self.args) != len(info.args):
            raise ValueError(
                f"{self.kind} expects {len(info.args)} arguments, got {len(self.args)}"
            )


@dataclass(frozen=True)
class And:
    parts: tuple
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class Or:
    parts: tuple
    span: Optional[SourceSpan] = _span_field()


Formula = Union[Constraint, And, Or]

# Conjunctions are passed around as plain tuples of constraints.
Conj = tuple

TRUE = And(())


def c(kind: str, *args: Term) -> Constraint:
    return Constraint(kind, tuple(args))


def conj(*parts: Formula) -> And:
    return And(tuple(parts))


def disj_of(*parts: Formula) -> Or:
    return Or(tuple(parts))


def negate_constraint(con: Constraint) -> Constraint:
    neg = KINDS[con.kind].negation
    if neg is None:
        raise NegationUnavailable(f"constraint kind {con.kind!r} has no negated form")
    return Constraint(neg, con.args)


# ---------------------------------------------------------------------------
# Sorts of terms


def term_sort(t: Term) -> Sort:
    """Sort of a term.  Raises SortError on ill-sorted structure."""
    if isinstance(t, Var):
        return t.sort
    cached = t.__dict__.get("_tsc")
    if cached is not None:
        return cached
    out = _term_sort_uncached(t)
    object.__setattr__(t, "_tsc", out)
    return out


def _term_sort_uncached(t: Term) -> Sort:
    if isinstance(t, UrFunctor):
        for a in t.args:
            if term_sort(a) is not Sort.O:
                raise SortError(
                    f"argument of functor {t.name!r} must denote a non-set object",
                    span=getattr(a, "span", None),
                )
        return Sort.O
    if isinstance(t, EmptySet):
        return Sort.SET
    if isinstance(t, ExtSet):
        term_sort(t.elem)  # any sort allowed, but must itself be well-sorted
        if term_sort(t.rest) is not Sort.SET:
            raise SortError("set part of an extensional set must denote a set",
                            span=getattr(t.rest, "span", None))
        return Sort.SET
    if isinstance(t, CartProd):
        if term_sort(t.left) is not Sort.SET or term_sort(t.right) is not Sort.SET:
            raise SortError("cartesian product arguments must denote sets",
                            span=t.span)
        return Sort.SET
    if isinstance(t, Pair):
        term_sort(t.first)
        term_sort(t.second)
        return Sort.O
    raise TypeError(f"not a term: {t!r}")


def check_constraint(con: Constraint) -> None:
    info = KINDS[con.kind]
    for req, arg in zip(info.args, con.args):
        s = term_sort(arg)
        if req in (SET_ARG, REL_ARG) and s is not Sort.SET:
            raise SortError(
                f"argument {pretty_atom(arg)} of {con.kind} must denote a set",
                span=getattr(arg, "span", None) or con.span,
            )


def check_formula(f: Formula) -> None:
    if isinstance(f, Constraint):
        check_constraint(f)
    elif isinstance(f, (And, Or)):
        for p in f.parts:
            check_formula(p)
    else:
        raise TypeError(f"not a formula: {f!r}")
    _check_consistent_sorts(f)


def _check_consistent_sorts(f: Formula) -> None:
    sorts: dict = {}

    def walk_term(t):
        if isinstance(t, Var):
            prev = sorts.setdefault(t.name, t.sort)
            if prev is not t.sort:
                raise SortError(
                    f"variable {t.name} is used with two different sorts"
                )
        elif isinstance(t, UrFunctor):
            for a in t.args:
                walk_term(a)
        elif isinstance(t, ExtSet):
            walk_term(t.elem)
            walk_term(t.rest)
        elif isinstance(t, CartProd):
            walk_term(t.left)
            walk_term(t.right)
        elif isinstance(t, Pair):
            walk_term(t.first)
            walk_term(t.second)

    def walk(x):
        if isinstance(x, Constraint):
            for a in x.args:
                walk_term(a)
        else:
            for p in x.parts:
                walk(p)

    walk(f)


def pretty_atom(t: Term) -> str:
    # Minimal rendering for error messages; the parser module owns the
    # full pretty-printer.
    from . import parser

    return parser.pretty(t)


# ---------------------------------------------------------------------------
# Free variables


def free_vars(x) -> dict:
    """Free variables of a term, constraint or formula.

    Returns an insertion-ordered {name: Sort} mapping (first occurrence
    order), which callers may treat as a set of (name, sort) pairs.
    The result is cached on the node and must not be mutated.
    """
    if isinstance(x, tuple):
        out: dict = {}
        for p in x:
            out.update(free_vars(p))
        return out
    cached = x.__dict__.get("_fvc")
    if cached is not None:
        return cached
    if isinstance(x, Var):
        out = {x.name: x.sort}
    elif isinstance(x, EmptySet):
        out = {}
    elif isinstance(x, UrFunctor):
        out = {}
        for a in x.args:
            out.update(free_vars(a))
    elif isinstance(x, ExtSet):
        out = dict(free_vars(x.elem))
        out.update(free_vars(x.rest))
    elif isinstance(x, CartProd):
        out = dict(free_vars(x.left))
        out.update(free_vars(x.right))
    elif isinstance(x, Pair):
        out = dict(free_vars(x.first))
        out.update(free_vars(x.second))
    elif isinstance(x, Constraint):
        out = {}
        for a in x.args:
            out.update(free_vars(a))
    elif isinstance(x, (And, Or)):
        out = {}
        for p in x.parts:
            out.update(free_vars(p))
    else:
        raise TypeError(f"cannot collect variables from {x!r}")
    object.__setattr__(x, "_fvc", out)
    return out


def occurs_in(name: str, t: Term) -> bool:
    return name in free_vars(t)


# ---------------------------------------------------------------------------
# Substitutions


class Substitution:
    """Idempotent, sort-respecting map from variable names to terms."""

    __slots__ = ("bindings",)

    def __init__(self, bindings: Optional[dict] = None, *, _trusted: bool = False):
        self.bindings: dict = dict(bindings) if bindings else {}
        if not _trusted and self.bindings:
            self._normalize()
            self._check_sorts()

    def _check_sorts(self):
        for name, img in self.bindings.items():
            # The bound variable's sort is recorded on first use; bindings
            # created through the public constructor must be checkable from
            # the image alone, so we only validate structure here.
            term_sort(img)

    def _normalize(self):
        # Repeatedly substitute images into each other until idempotent.
        for _ in range(len(self.bindings) + 1):
            changed = False
            for name in list(self.bindings):
                img = self.bindings[name]
                if name in free_vars(img):
                    raise SortError(f"binding for {name} is not well-founded")
                new = self.apply_term(img)
                if new != img:
                    self.bindings[name] = new
                    changed = True
            if not changed:
                return
        raise SortError("substitution cannot be normalized (cyclic bindings)")

    def __bool__(self):
        return bool(self.bindings)

    def __eq__(self, other):
        return isinstance(other, Substitution) and self.bindings == other.bindings

    def __repr__(self):
        inner = ", ".join(f"{k} -> {v!r}" for k, v in self.bindings.items())
        return f"Substitution({{{inner}}})"

    def get(self, name: str):
        return self.bindings.get(name)

    def items(self):
        return self.bindings.items()

    def apply_term(self, t: Term) -> Term:
        if isinstance(t, Var):
            img = self.bindings.get(t.name)
            return t if img is None else img
        if isinstance(t, UrFunctor):
            if not t.args:
                return t
            return UrFunctor(t.name, tuple(self.apply_term(a) for a in t.args), t.span)
        if isinstance(t, EmptySet):
            return t
        if isinstance(t, ExtSet):
            return ExtSet(self.apply_term(t.elem), self.apply_term(t.rest), t.span)
        if isinstance(t, CartProd):
            return CartProd(self.apply_term(t.left), self.apply_term(t.right), t.span)
        if isinstance(t, Pair):
            return Pair(self.apply_term(t.first), self.apply_term(t.second), t.span)
        raise TypeError(f"not a term: {t!r}")

    def apply_constraint(self, con: Constraint) -> Constraint:
        return Constraint(con.kind, tuple(self.apply_term(a) for a in con.args), con.span)

    def apply_formula(self, f: Formula) -> Formula:
        if isinstance(f, Constraint):
            return self.apply_constraint(f)
        if isinstance(f, And):
            return And(tuple(self.apply_formula(p) for p in f.parts), f.span)
        if isinstance(f, Or):
            return Or(tuple(self.apply_formula(p) for p in f.parts), f.span)
        raise TypeError(f"not a formula: {f!r}")

    def apply_conj(self, cs: Conj) -> Conj:
        return tuple(self.apply_constraint(x) for x in cs)

    def bind(self, var: Var, img: Term) -> None:
        """Add var -> img, keeping the substitution idempotent.

        The caller is responsible for occurs and sort checks (the rewrite
        rules perform them); this method re-validates cheaply.
        """
        if var.name in free_vars(img):
            raise SortError(f"occurs check failed binding {var.name}")
        one = Substitution({var.name: img}, _trusted=True)
        for name in list(self.bindings):
            self.bindings[name] = one.apply_term(self.bindings[name])
        self.bindings[var.name] = img

    def copy(self) -> "Substitution":
        return Substitution(self.bindings, _trusted=True)


def apply_subst(s: Substitution, x):
    """Apply a substitution to a term, constraint or formula.

    The result is re-checked for well-sortedness; a binding that violates
    argument sorts raises SortError.
    """
    if isinstance(x, Constraint):
        out = s.apply_constraint(x)
        check_constraint(out)
        return out
    if isinstance(x, (And, Or)):
        out = s.apply_formula(x)
        check_formula(out)
        return out
    if isinstance(x, tuple):
        out = s.apply_conj(x)
        for con in out:
            check_constraint(con)
        return out
    out = s.apply_term(x)
    term_sort(out)
    return out


# ---------------------------------------------------------------------------
# Fresh variables


class VarGen:
    """Monotone fresh-variable supply with a reserved name prefix."""

    __slots__ = ("counter", "prefix")

    def __init__(self, counter: int = 0, prefix: str = "_N"):
        if not prefix.startswith(FRESH_PREFIX):
            raise ValueError("fresh-variable prefix must be reserved")
        self.counter = counter
        self.prefix = prefix

    def fresh(self, sort: Sort) -> Var:
        v = Var(f"{self.prefix}{self.counter}", sort)
        self.counter += 1
        return v


def fresh_var(g: VarGen, sort: Sort) -> Var:
    return g.fresh(sort)


# ---------------------------------------------------------------------------
# Formula utilities


def formula_constraints(f: Formula) -> Iterator[Constraint]:
    if isinstance(f, Constraint):
        yield f
    else:
        for p in f.parts:
            yield from formula_constraints(p)


def dnf(f: Formula) -> list:
    """Flatten a formula into a list of conjunctions (disjunctive normal form)."""
    if isinstance(f, Constraint):
        return [(f,)]
    if isinstance(f, And):
        out = [()]
        for p in f.parts:
            out = [left + right for left in out for right in dnf(p)]
        return out
    if isinstance(f, Or):
        out = []
        for p in f.parts:
            out.extend(dnf(p))
        if not f.parts:
            # An empty disjunction is unsatisfiable; represent it as a
            # single impossible conjunction.
            return [(c("neq", EMPTY, EMPTY),)]
        return out
    raise TypeError(f"not a formula: {f!r}")


def conj_formula(cs: Iterable[Constraint]) -> Formula:
    cs = tuple(cs)
    if len(cs) == 1:
        return cs[0]
    return And(cs)


def strip_spans(x):
    """Structural copy with all spans removed (useful in tests)."""
    if isinstance(x, Var):
        return Var(x.name, x.sort)
    if isinstance(x, UrFunctor):
        return UrFunctor(x.name, tuple(strip_spans(a) for a in x.args))
    if isinstance(x, EmptySet):
        return EMPTY
    if isinstance(x, ExtSet):
        return ExtSet(strip_spans(x.elem), strip_spans(x.rest))
    if isinstance(x, CartProd):
        return CartProd(strip_spans(x.left), strip_spans(x.right))
    if isinstance(x, Pair):
        return Pair(strip_spans(x.first), strip_spans(x.second))
    if isinstance(x, Constraint):
        return Constraint(x.kind, tuple(strip_spans(a) for a in x.args))
    if isinstance(x, And):
        return And(tuple(strip_spans(p) for p in x.parts))
    if isinstance(x, Or):
        return Or(tuple(strip_spans(p) for p in x.parts))
    if isinstance(x, tuple):
        return tuple(strip_spans(p) for p in x)
    raise TypeError(f"cannot strip spans from {x!r}")
