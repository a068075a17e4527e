"""The outer solving loop: fixpoint rewriting with depth-first branch
exploration, solved forms, witness extraction and theorem refutation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from . import derived  # noqa: F401  (registers the derived-operator rules)
from . import ground
from .errors import NegationUnavailable, WitnessFailure
from .ground import Assignment, Atom, EMPTY_V, PairV, SetV, eval_formula, eval_term
from .rewrite import (
    FALSE,
    _clashes,
    _occurs_elsewhere,
    advance,
    bindable,
    is_solved_form,
    seed_state,
    sweep,
)
from .sorts import sort_infer
from .terms import (
    And,
    Conj,
    Constraint,
    Formula,
    Or,
    Sort,
    Substitution,
    Var,
    VarGen,
    check_formula,
    dnf,
    free_vars,
    negate_constraint,
)

__all__ = [
    "Budget",
    "SolvedForm",
    "Unsat",
    "Sat",
    "Unknown",
    "solve",
    "is_solved_form",
    "extract_witness",
    "prove_valid",
    "Proved",
    "Counterexample",
    "ProveUnknown",
]


@dataclass(frozen=True)
class Budget:
    max_steps: int = 100_000
    timeout: float = 30.0  # seconds of wall time
    # When set, stop exploring after this many solved branches.  The
    # default explores the whole branch tree (the complete finite
    # representation of all solutions); a bound keeps satisfiable
    # formulas with very wide solution spaces tractable and is sound for
    # the Sat verdict and witness extraction.
    max_solutions: Optional[int] = None


@dataclass
class SolvedForm:
    equalities: Substitution
    residual: Conj
    origin: Formula


@dataclass
class Unsat:
    pass


@dataclass
class Sat:
    branches: list  # non-empty list of SolvedForm


@dataclass
class Unknown:
    reason: str  # "steps" | "timeout" | "interrupted"


def _split_solved(conj: Conj, origin: Formula) -> SolvedForm:
    bindings = {}
    residual = []
    lst = list(conj)
    for con in lst:
        m = bindable(con)
        if m is not None and not _occurs_elsewhere(m[0].name, lst, [], con):
            bindings[m[0].name] = m[1]
        else:
            residual.append(con)
    return SolvedForm(Substitution(bindings, _trusted=True), tuple(residual), origin)


def _render_with_sorts(x) -> str:
    """Like the pretty-printer but with every variable's sort attached,
    so that states differing only in a variable's sort never collide."""
    if isinstance(x, Constraint):
        cached = x.__dict__.get("_krc")
        if cached is not None:
            return cached
        out = x.kind + "(" + ",".join(_render_with_sorts(a) for a in x.args) + ")"
        object.__setattr__(x, "_krc", out)
        return out
    if isinstance(x, Var):
        return x.name + ("#s" if x.sort is Sort.SET else "#o")
    from .terms import CartProd, EmptySet, ExtSet, Pair, UrFunctor

    if isinstance(x, UrFunctor):
        if not x.args:
            return x.name
        return x.name + "(" + ",".join(_render_with_sorts(a) for a in x.args) + ")"
    if isinstance(x, EmptySet):
        return "{}"
    if isinstance(x, ExtSet):
        return "{" + _render_with_sorts(x.elem) + "/" + _render_with_sorts(x.rest) + "}"
    if isinstance(x, CartProd):
        return "cp(" + _render_with_sorts(x.left) + "," + _render_with_sorts(x.right) + ")"
    if isinstance(x, Pair):
        return "[" + _render_with_sorts(x.first) + "," + _render_with_sorts(x.second) + "]"
    raise TypeError(f"not renderable: {x!r}")


def _canonical_key(conj: Conj) -> tuple:
    """Conjunction key invariant under fresh-variable renaming and
    constraint order: used to prune duplicate search states."""
    rendered = sorted(_render_with_sorts(c) for c in conj)
    mapping: dict = {}
    out = []
    for s in rendered:
        pieces = []
        i = 0
        while i < len(s):
            if s.startswith("_N", i):
                j = i + 2
                while j < len(s) and s[j].isdigit():
                    j += 1
                name = s[i:j]
                mapping.setdefault(name, f"_V{len(mapping)}")
                pieces.append(mapping[name])
                i = j
            else:
                pieces.append(s[i])
                i += 1
        out.append("".join(pieces))
    return tuple(out)


def solve(f: Formula, b: Optional[Budget] = None, cancel=None) -> object:
    """Decide satisfiability of a formula.

    Runs sort inference once, splits into disjuncts, and rewrites each
    conjunction to a fixpoint, exploring rule branches depth-first.
    Unsat iff every branch reached false; Sat carries every irreducible
    branch; Unknown reports budget exhaustion with partial state
    discarded.  Search states that are duplicates of already-explored
    states up to fresh-variable renaming are pruned.
    """
    b = b or Budget()
    check_formula(f)
    annotated = sort_infer(f)
    disjuncts = dnf(annotated)
    g = VarGen()
    deadline = time.monotonic() + b.timeout
    steps = 0
    results = []
    stack = []
    for conj in reversed(disjuncts):
        seeded = seed_state(conj)
        if seeded is not None:
            stack.append(seeded)
    seen = set()
    while stack:
        if b.max_solutions is not None and len(results) >= b.max_solutions:
            break
        if cancel is not None and cancel.is_set():
            return Unknown("interrupted")
        if time.monotonic() > deadline:
            return Unknown("timeout")
        quiet, active = stack.pop()
        if not active:
            if not _clashes(quiet):
                results.append(_split_solved(tuple(quiet), f))
            continue
        succs, fired = advance(quiet, active, g)
        steps += fired
        if steps > b.max_steps:
            return Unknown("steps")
        for nxt_quiet, nxt_active in reversed(succs):
            if not nxt_active:
                results.append(_split_solved(tuple(nxt_quiet), f))
                continue
            key = _canonical_key(tuple(nxt_quiet) + tuple(nxt_active))
            if key in seen:
                continue
            seen.add(key)
            stack.append((nxt_quiet, nxt_active))
    if not results:
        return Unsat()
    return Sat(results)


# ---------------------------------------------------------------------------
# Witness extraction


def _witness_atoms():
    i = 0
    while True:
        yield Atom(f"_w{i}")
        i += 1


def extract_witness(s: SolvedForm) -> Assignment:
    """Ground assignment satisfying the branch (and its origin formula).

    Set variables default to the empty set and object variables to fresh
    distinct atoms; residual constraints that forbid a default (pair
    shape, disequalities) trigger local adjustments.  A residual that
    cannot be satisfied this way raises WitnessFailure rather than
    returning a wrong model.
    """
    needed: dict = {}
    for con in s.residual:
        needed.update(free_vars(con))
    for _name, img in s.equalities.items():
        needed.update(free_vars(img))
    for name, sort in free_vars(s.origin).items():
        if s.equalities.get(name) is None:
            needed.setdefault(name, sort)
    supply = _witness_atoms()
    asg: Assignment = {}
    for name in sorted(needed):
        if needed[name] is Sort.SET:
            asg[name] = EMPTY_V
        else:
            asg[name] = next(supply)

    def value_of(term):
        return eval_term(term, asg)

    for _round in range(6):
        bad = [con for con in s.residual if not ground.eval_constraint(con, asg)]
        if not bad:
            break
        progress = False
        for con in bad:
            if con.kind == "pair":
                (t,) = con.args
                if isinstance(t, Var):
                    asg[t.name] = PairV(next(supply), next(supply))
                    progress = True
            elif con.kind == "neq":
                a, b_ = con.args
                var = a if isinstance(a, Var) else b_ if isinstance(b_, Var) else None
                other = b_ if var is a else a
                if isinstance(var, Var):
                    if var.sort is Sort.O:
                        asg[var.name] = next(supply)
                        progress = True
                    else:
                        current = value_of(other)
                        for cand in (
                            EMPTY_V,
                            SetV(frozenset({next(supply)})),
                            SetV(frozenset({next(supply)})),
                        ):
                            if cand != current:
                                asg[var.name] = cand
                                progress = True
                                break
        if not progress:
            break
    bad = [con for con in s.residual if not ground.eval_constraint(con, asg)]
    if bad:
        from .parser import pretty

        raise WitnessFailure(
            "cannot satisfy residual constraints: "
            + "; ".join(pretty(c) for c in bad)
        )
    for name, img in s.equalities.items():
        asg[name] = eval_term(img, asg)
    if not eval_formula(s.origin, asg):
        raise WitnessFailure("assignment does not satisfy the original formula")
    return asg


# ---------------------------------------------------------------------------
# Proving by refutation


@dataclass
class Proved:
    pass


@dataclass
class Counterexample:
    assignment: Assignment


@dataclass
class ProveUnknown:
    reason: str


def prove_valid(hyps, thesis: Conj, b: Optional[Budget] = None, cancel=None):
    """Prove hyps => thesis by refuting hyps /\\ (some negated thesis part).

    Unsat means proved; Sat yields a checked counterexample; Unknown is
    passed through.
    """
    if isinstance(hyps, tuple):
        hyp_parts = hyps
    elif isinstance(hyps, Constraint):
        hyp_parts = (hyps,)
    elif isinstance(hyps, And):
        hyp_parts = hyps.parts
    else:
        hyp_parts = (hyps,)
    negated = tuple(negate_constraint(c) for c in thesis)
    if not negated:
        return Proved()  # empty thesis is trivially valid
    formula = And(tuple(hyp_parts) + (Or(negated),))
    b = b or Budget()
    # One counterexample suffices; refutation still explores everything.
    refute_budget = Budget(b.max_steps, b.timeout, max_solutions=1)
    out = solve(formula, refute_budget, cancel=cancel)
    if isinstance(out, Unsat):
        return Proved()
    if isinstance(out, Unknown):
        return ProveUnknown(out.reason)
    last_error = None
    for branch in out.branches:
        try:
            return Counterexample(extract_witness(branch))
        except WitnessFailure as e:
            last_error = e
    raise last_error if last_error else WitnessFailure("no extractable branch")
