"""Constraint rewriting: the per-kind rule catalog and the sweep step.

Each rule reduces the syntactic complexity of one constraint, possibly
branching into alternatives.  Rules are tried in registration order and
the first one whose pattern matches fires; a constraint on which no rule
fires is in solved form.  Fresh variables come from the session VarGen
and never collide with user names (reserved prefix).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

from .errors import UnboundVariable
from .terms import (
    CartProd,
    Conj,
    Constraint,
    EMPTY,
    EmptySet,
    ExtSet,
    FRESH_PREFIX,
    KINDS,
    Pair,
    REL_ARG,
    SET_ARG,
    Sort,
    Substitution,
    Term,
    UrFunctor,
    Var,
    VarGen,
    free_vars,
    term_sort,
)
from . import ground


# ---------------------------------------------------------------------------
# Outcomes


class _Unchanged:
    def __repr__(self):
        return "Unchanged"


class _False:
    def __repr__(self):
        return "RewriteFalse"


UNCHANGED = _Unchanged()
FALSE = _False()


@dataclass
class Rewritten:
    branches: list  # non-empty list of lists of Constraint


def true_outcome() -> Rewritten:
    return Rewritten([[]])


# ---------------------------------------------------------------------------
# Catalog


@dataclass
class Rule:
    kind: str
    name: str
    pattern: str
    branch_count: str
    fn: Callable


CATALOG: dict = {}


def rule(kind: str, name: str, pattern: str, branches: str):
    def deco(fn):
        CATALOG.setdefault(kind, []).append(Rule(kind, name, pattern, branches, fn))
        return fn

    return deco


def catalog_dump() -> list:
    """Machine-readable rule listing (name, kind, pattern, branch count)."""
    out = []
    for kind in CATALOG:
        for r in CATALOG[kind]:
            out.append(
                {
                    "kind": kind,
                    "name": r.name,
                    "pattern": r.pattern,
                    "branches": r.branch_count,
                }
            )
    return out


# ---------------------------------------------------------------------------
# Small helpers


def is_ground(x) -> bool:
    return not free_vars(x)


def eq(a: Term, b: Term) -> Constraint:
    return Constraint("eq", (a, b))


def _c(kind, *args) -> Constraint:
    return Constraint(kind, tuple(args))


ELEM_SORTS = (Sort.O, Sort.SET)  # branch order for sort splits


def value_to_term(v) -> Term:
    """Literal term denoting a ground value (used to expand ground products)."""
    if isinstance(v, ground.Atom):
        return UrFunctor(v.name)
    if isinstance(v, ground.PairV):
        return Pair(value_to_term(v.first), value_to_term(v.second))
    if isinstance(v, ground.SetV):
        out: Term = EMPTY
        for m in sorted(v.members, key=ground.value_key, reverse=True):
            out = ExtSet(value_to_term(m), out)
        return out
    raise TypeError(f"not a ground value: {v!r}")


def _has_ground_cp(t: Term) -> bool:
    if isinstance(t, CartProd):
        if is_ground(t):
            return True
        if isinstance(t.left, EmptySet) or isinstance(t.right, EmptySet):
            return True
        return _has_ground_cp(t.left) or _has_ground_cp(t.right)
    if isinstance(t, ExtSet):
        return _has_ground_cp(t.elem) or _has_ground_cp(t.rest)
    if isinstance(t, Pair):
        return _has_ground_cp(t.first) or _has_ground_cp(t.second)
    if isinstance(t, UrFunctor):
        return any(_has_ground_cp(a) for a in t.args)
    return False


def _expand_ground_cp(t: Term) -> Term:
    if isinstance(t, CartProd):
        if is_ground(t):
            return value_to_term(ground.eval_term(t, {}))
        if isinstance(t.left, EmptySet) or isinstance(t.right, EmptySet):
            return EMPTY
        return CartProd(_expand_ground_cp(t.left), _expand_ground_cp(t.right))
    if isinstance(t, ExtSet):
        return ExtSet(_expand_ground_cp(t.elem), _expand_ground_cp(t.rest))
    if isinstance(t, Pair):
        return Pair(_expand_ground_cp(t.first), _expand_ground_cp(t.second))
    if isinstance(t, UrFunctor) and t.args:
        return UrFunctor(t.name, tuple(_expand_ground_cp(a) for a in t.args))
    return t


def spine(t: Term):
    """Elements and tail of a right-nested extensional set."""
    elems = []
    while isinstance(t, ExtSet):
        elems.append(t.elem)
        t = t.rest
    return elems, t


def _dedup_term(t: Term) -> Term:
    """Drop structurally identical duplicates from extensional spines
    (the absorption axiom applied at the syntactic level)."""
    if isinstance(t, ExtSet):
        elems, tail = spine(t)
        new_elems = []
        for e in elems:
            ne = _dedup_term(e)
            if ne not in new_elems:
                new_elems.append(ne)
        out = _dedup_term(tail)
        for e in reversed(new_elems):
            out = ExtSet(e, out)
        return out
    if isinstance(t, CartProd):
        return CartProd(_dedup_term(t.left), _dedup_term(t.right))
    if isinstance(t, Pair):
        return Pair(_dedup_term(t.first), _dedup_term(t.second))
    if isinstance(t, UrFunctor) and t.args:
        return UrFunctor(t.name, tuple(_dedup_term(a) for a in t.args))
    return t


def dedup_constraint(con: Constraint) -> Constraint:
    cached = con.__dict__.get("_ddc")
    if cached is not None:
        return cached
    out = Constraint(con.kind, tuple(_dedup_term(a) for a in con.args), con.span)
    object.__setattr__(con, "_ddc", out)
    object.__setattr__(out, "_ddc", out)
    return out


def match_pair(t: Term, g: VarGen):
    """Alternatives (first, second, prefix-constraints) for reading t as a pair.

    Empty result means t can never denote a pair."""
    if isinstance(t, Pair):
        return [(t.first, t.second, [])]
    if isinstance(t, Var) and t.sort is Sort.O:
        alts = []
        for s1 in ELEM_SORTS:
            for s2 in ELEM_SORTS:
                n1, n2 = g.fresh(s1), g.fresh(s2)
                alts.append((n1, n2, [eq(t, Pair(n1, n2))]))
        return alts
    return []


def fresh_elems(g: VarGen):
    """One fresh variable of each element sort, in branch order."""
    return [g.fresh(s) for s in ELEM_SORTS]


def statically_false(con: Constraint) -> bool:
    """Constraint that no assignment can satisfy for structural reasons.

    Substitution may put an object-sorted term in a set position (for
    example ``x in P`` after ``P`` was bound to a pair); such constraints
    are false, not ill-formed."""
    info = KINDS[con.kind]
    for req, arg in zip(info.args, con.args):
        if req in (SET_ARG, REL_ARG):
            try:
                if term_sort(arg) is not Sort.SET:
                    return True
            except Exception:
                return True
    if con.kind == "eq":
        try:
            if term_sort(con.args[0]) is not term_sort(con.args[1]):
                return True
        except Exception:
            return True
    return False


def _ground_eval(con: Constraint):
    try:
        return ground.eval_constraint(con, {})
    except Exception:
        return None


def quick_verdict(con: Constraint):
    """Constant-time structural verdicts used to fold constraints as soon
    as they are produced (agrees with the full rules by construction)."""
    k = con.kind
    if k == "eq":
        if con.args[0] == con.args[1]:
            return True
    elif k == "neq":
        if con.args[0] == con.args[1]:
            return False
    elif k in ("in", "nin"):
        x, s = con.args
        if isinstance(s, EmptySet):
            return k == "nin"
        if isinstance(s, ExtSet):
            elems, _tail = spine(s)
            if any(e == x for e in elems):
                return k == "in"
    elif k == "disj":
        a, b = con.args
        if isinstance(a, ExtSet) and isinstance(b, ExtSet):
            ea, _ = spine(a)
            eb, _ = spine(b)
            if any(x in eb for x in ea):
                return False
    return None


# ---------------------------------------------------------------------------
# The dispatcher


def rewrite_constraint(con: Constraint, g: VarGen):
    """Apply the first matching rule; UNCHANGED means solved form."""
    if statically_false(con):
        return FALSE
    if is_ground(con):
        verdict = _ground_eval(con)
        if verdict is True:
            return true_outcome()
        if verdict is False:
            return FALSE
    if any(_has_ground_cp(t) for t in con.args):
        new_args = tuple(_expand_ground_cp(t) for t in con.args)
        return Rewritten([[Constraint(con.kind, new_args)]])
    for r in CATALOG.get(con.kind, ()):
        out = r.fn(con, g)
        if out is not None:
            return out
    return UNCHANGED


# ---------------------------------------------------------------------------
# Forward evaluation: when every input of a functionally determined
# constraint is ground, bind the output to the computed literal.

_FORWARD_SLOTS = {
    "un": (2,), "inters": (2,), "diff": (2,), "comp": (2,),
    "id": (1, 0), "inv": (1, 0), "dom": (1,), "ran": (1,),
    "dres": (2,), "rres": (2,), "dares": (2,), "rares": (2,),
    "rimg": (2,), "oplus": (2,),
}


def _forward_value(kind: str, vals: list, slot: int):
    if kind == "id" and slot == 0:
        r = vals[1]
        if not ground.is_rel(r) or any(p.first != p.second for p in r.members):
            return None
        return ground.setv(p.first for p in r.members)
    if kind == "inv" and slot == 0:
        s = vals[1]
        if not ground.is_rel(s):
            return None
        return ground.setv(ground.PairV(p.second, p.first) for p in s.members)
    if kind == "ran" and slot == 1:
        r = vals[0]
        if not ground.is_rel(r):
            return None
        return ground.setv(p.second for p in r.members)
    return ground._determine(kind, vals, slot)


def _make_forward_rule(kind: str, slots: tuple):
    def forward(con, g):
        for slot in slots:
            if is_ground(con.args[slot]):
                continue
            others_ground = all(
                is_ground(a) for i, a in enumerate(con.args) if i != slot
            )
            if not others_ground:
                continue
            vals = [
                ground.eval_term(a, {}) if i != slot else None
                for i, a in enumerate(con.args)
            ]
            forced = _forward_value(kind, vals, slot)
            if forced is None:
                return FALSE  # ground inputs already violate the constraint
            return Rewritten([[eq(con.args[slot], value_to_term(forced))]])
        return None

    return forward


for _kind, _slots in _FORWARD_SLOTS.items():
    CATALOG.setdefault(_kind, []).append(
        Rule(
            _kind,
            f"{_kind}_forward",
            f"{_kind} with ground determined inputs",
            "1",
            _make_forward_rule(_kind, _slots),
        )
    )


# ---------------------------------------------------------------------------
# Equality


def _flexible(t: Term) -> bool:
    """Terms the empty-set assignment can drive to the empty set."""
    if isinstance(t, Var):
        return True
    if isinstance(t, CartProd):
        return _flexible(t.left) or _flexible(t.right)
    return False


@rule("eq", "eq_identical", "t = t", "true")
def eq_identical(con, g):
    if con.args[0] == con.args[1]:
        return true_outcome()
    return None


def _var_side(con):
    a, b = con.args
    if isinstance(a, Var):
        return a, b
    if isinstance(b, Var):
        return b, a
    return None, None


@rule("eq", "eq_var", "X = t (binding, occurs and sort checks)", "1-2")
def eq_var(con, g):
    x, t = _var_side(con)
    if x is None or isinstance(t, Var) and t == x:
        return None
    occurring = x.name in free_vars(t)
    if not occurring:
        if term_sort(t) is not x.sort:
            return FALSE
        # Clean binding: solved form, consumed by the simplifier.
        return None
    # X occurs inside t.
    if isinstance(t, ExtSet):
        elems, tail = spine(t)
        if any(x.name in free_vars(e) for e in elems):
            return FALSE  # membership chain would be ill-founded
        if isinstance(tail, Var) and tail == x:
            n = g.fresh(Sort.SET)
            new = x
            out: Term = n
            for e in reversed(elems):
                out = ExtSet(e, out)
            return Rewritten([[eq(new, out)]])
        if x.name in free_vars(tail):
            if isinstance(tail, CartProd):
                # X = {spine | AxB with X inside}: the product part must
                # be empty, otherwise membership would be ill-founded.
                closed: Term = EMPTY
                for e in reversed(elems):
                    closed = ExtSet(e, closed)
                return Rewritten(
                    [
                        [eq(x, closed), eq(tail.left, EMPTY)],
                        [eq(x, closed), eq(tail.right, EMPTY)],
                    ]
                )
            return FALSE
        return FALSE
    if isinstance(t, CartProd):
        return Rewritten(
            [
                [eq(x, EMPTY), eq(t.left, EMPTY)],
                [eq(x, EMPTY), eq(t.right, EMPTY)],
            ]
        )
    # Pairs and functors: strict occurrence, no finite solution.
    return FALSE


@rule("eq", "eq_empty_ext", "{} = {t|A}", "false")
def eq_empty_ext(con, g):
    a, b = con.args
    shapes = {type(a), type(b)}
    if EmptySet in shapes and ExtSet in shapes:
        return FALSE
    return None


@rule("eq", "eq_empty_cp", "{} = cp(A,B)", "2")
def eq_empty_cp(con, g):
    a, b = con.args
    if isinstance(a, CartProd) and isinstance(b, EmptySet):
        a, b = b, a
    if isinstance(a, EmptySet) and isinstance(b, CartProd):
        return Rewritten([[eq(b.left, EMPTY)], [eq(b.right, EMPTY)]])
    return None


@rule("eq", "eq_ext_ground", "{e1..ek|T} = ground set (directed matching)", "bounded enumeration")
def eq_ext_ground(con, g):
    a, b = con.args
    if isinstance(b, ExtSet) and not is_ground(b) and is_ground(a):
        a, b = b, a
    if not (isinstance(a, ExtSet) and is_ground(b)):
        return None
    if is_ground(a):
        return None  # dispatcher ground fast path handles it
    try:
        gval = ground.eval_term(b, {})
    except Exception:
        return None
    if not isinstance(gval, ground.SetV):
        return FALSE
    elems, tail = spine(a)
    members = sorted(gval.members, key=ground.value_key)
    if not members:
        return FALSE  # extensional set is never empty
    k = len(elems)
    if len(members) ** k * (2 ** min(k, len(members))) > 20_000:
        return None  # too wide: fall back to generic unification
    import itertools as _it

    branches = []
    for image in _it.product(members, repeat=k):
        covered = frozenset(image)
        rest_base = gval.members - covered
        extras = sorted(covered, key=ground.value_key)
        for mask in range(2 ** len(extras)):
            v = set(rest_base)
            for j, m in enumerate(extras):
                if mask >> j & 1:
                    v.add(m)
            br = [eq(e, value_to_term(val)) for e, val in zip(elems, image)]
            br.append(eq(tail, value_to_term(ground.setv(v))))
            branches.append(br)
    return Rewritten(branches)


@rule("eq", "eq_ext_ext", "{x|A} = {y|B} (set unification)", "4 (3 when x is y)")
def eq_ext_ext(con, g):
    a, b = con.args
    if not (isinstance(a, ExtSet) and isinstance(b, ExtSet)):
        return None
    x, rest_a = a.elem, a.rest
    y, rest_b = b.elem, b.rest
    if x == y:
        # Identical heads: the permutativity branch is subsumed by the
        # first three, and dropping it stops known elements from being
        # re-floated through fresh tails.
        return Rewritten(
            [
                [eq(rest_a, rest_b)],
                [eq(a, rest_b)],
                [eq(rest_a, b)],
            ]
        )
    n = g.fresh(Sort.SET)
    return Rewritten(
        [
            [eq(x, y), eq(rest_a, rest_b)],
            [eq(x, y), eq(a, rest_b)],
            [eq(x, y), eq(rest_a, b)],
            [eq(rest_a, ExtSet(y, n)), eq(ExtSet(x, n), rest_b)],
        ]
    )


@rule("eq", "eq_ext_cp_ground", "{ground pairs} = cp(A,B)", "1 or false")
def eq_ext_cp_ground(con, g):
    a, b = con.args
    if isinstance(a, CartProd) and isinstance(b, ExtSet):
        a, b = b, a
    if not (isinstance(a, ExtSet) and isinstance(b, CartProd)):
        return None
    if not is_ground(a):
        return None
    val = ground.eval_term(a, {})
    if not ground.is_rel(val) or not val.members:
        return FALSE
    firsts = ground.setv(p.first for p in val.members)
    seconds = ground.setv(p.second for p in val.members)
    product = ground.setv(
        ground.PairV(x, y) for x in firsts.members for y in seconds.members
    )
    if product != val:
        return FALSE
    return Rewritten(
        [[eq(b.left, value_to_term(firsts)), eq(b.right, value_to_term(seconds))]]
    )


@rule("eq", "eq_ext_cp", "{t|C} = cp(A,B)", "1 (recursive)")
def eq_ext_cp(con, g):
    a, b = con.args
    if isinstance(a, CartProd) and isinstance(b, ExtSet):
        a, b = b, a
    if not (isinstance(a, ExtSet) and isinstance(b, CartProd)):
        return None
    t = a.elem
    branches = []
    for first, second, prefix in match_pair(t, g):
        n3, n4, n5 = g.fresh(Sort.SET), g.fresh(Sort.SET), g.fresh(Sort.SET)
        # With copy-free splits A = {first|N3}, B = {second|N4}:
        # A x B = {(first,second)} u ({first} x N4) u (N3 x B), and the
        # head pair cannot reappear in the remainder.
        rest_union = _c(
            "un",
            CartProd(ExtSet(first, EMPTY), n4),
            CartProd(n3, ExtSet(second, n4)),
            n5,
        )
        branches.append(
            prefix
            + [
                eq(b.left, ExtSet(first, n3)),
                _c("nin", first, n3),
                eq(b.right, ExtSet(second, n4)),
                _c("nin", second, n4),
                rest_union,
                eq(a, ExtSet(Pair(first, second), n5)),
                _c("nin", Pair(first, second), n5),
            ]
        )
    if not branches:
        return FALSE
    return Rewritten(branches)


@rule("eq", "eq_cp_cp", "cp(A,B) = cp(C,D)", "5")
def eq_cp_cp(con, g):
    a, b = con.args
    if not (isinstance(a, CartProd) and isinstance(b, CartProd)):
        return None
    return Rewritten(
        [
            [eq(a.left, b.left), eq(a.right, b.right)],
            [eq(a.left, EMPTY), eq(b.left, EMPTY)],
            [eq(a.left, EMPTY), eq(b.right, EMPTY)],
            [eq(a.right, EMPTY), eq(b.left, EMPTY)],
            [eq(a.right, EMPTY), eq(b.right, EMPTY)],
        ]
    )


@rule("eq", "eq_pair_pair", "[a,b] = [c,d]", "1")
def eq_pair_pair(con, g):
    a, b = con.args
    if isinstance(a, Pair) and isinstance(b, Pair):
        return Rewritten([[eq(a.first, b.first), eq(a.second, b.second)]])
    return None


@rule("eq", "eq_ur_ur", "f(..) = g(..)", "1 or false")
def eq_ur_ur(con, g):
    a, b = con.args
    if isinstance(a, UrFunctor) and isinstance(b, UrFunctor):
        if a.name != b.name or len(a.args) != len(b.args):
            return FALSE
        return Rewritten([[eq(x, y) for x, y in zip(a.args, b.args)]])
    if isinstance(a, (UrFunctor, Pair)) and isinstance(b, (UrFunctor, Pair)):
        return FALSE  # the pair constructor differs from every named functor
    return None


# ---------------------------------------------------------------------------
# Disequality


@rule("neq", "neq_identical", "t neq t", "false")
def neq_identical(con, g):
    if con.args[0] == con.args[1]:
        return FALSE
    return None


@rule("neq", "neq_cross_sort", "set-term neq object-term", "true")
def neq_cross_sort(con, g):
    if term_sort(con.args[0]) is not term_sort(con.args[1]):
        return true_outcome()
    return None


@rule("neq", "neq_occurs", "X neq t, X inside t", "varies")
def neq_occurs(con, g):
    x, t = _var_side(con)
    if x is None or x.name not in free_vars(t):
        return None
    if isinstance(t, ExtSet):
        elems, tail = spine(t)
        if any(x.name in free_vars(e) for e in elems):
            return true_outcome()  # equality would be ill-founded
        if isinstance(tail, Var) and tail == x:
            # X neq {e1..ek | X} holds iff some element is outside X.
            return Rewritten([[_c("nin", e, x)] for e in elems])
        return true_outcome()
    if isinstance(t, CartProd):
        return Rewritten(
            [
                [_c("neq", x, EMPTY)],
                [eq(x, EMPTY), _c("neq", t.left, EMPTY), _c("neq", t.right, EMPTY)],
            ]
        )
    return true_outcome()


@rule("neq", "neq_pair_pair", "[a,b] neq [c,d]", "2")
def neq_pair_pair(con, g):
    a, b = con.args
    if isinstance(a, Pair) and isinstance(b, Pair):
        return Rewritten(
            [[_c("neq", a.first, b.first)], [_c("neq", a.second, b.second)]]
        )
    return None


@rule("neq", "neq_ur_ur", "f(..) neq g(..)", "true or componentwise")
def neq_ur_ur(con, g):
    a, b = con.args
    if isinstance(a, UrFunctor) and isinstance(b, UrFunctor):
        if a.name != b.name or len(a.args) != len(b.args):
            return true_outcome()
        if not a.args:
            return FALSE
        return Rewritten([[_c("neq", x, y)] for x, y in zip(a.args, b.args)])
    if isinstance(a, (UrFunctor, Pair)) and isinstance(b, (UrFunctor, Pair)):
        return true_outcome()
    return None


@rule("neq", "neq_var_obj", "X neq t (object sort: solved)", "none")
def neq_var_obj(con, g):
    x, t = _var_side(con)
    if x is not None and x.sort is Sort.O:
        return None  # solved form; keep explicit for catalog readability
    if term_sort(con.args[0]) is Sort.O:
        # Object-sorted disequality between non-variable terms was already
        # covered by the pair/functor rules above.
        return None
    return _neq_set_witness(con, g)


def _neq_set_witness(con, g):
    """Set disequality: some element separates the two sides."""
    a, b = con.args
    if isinstance(a, EmptySet) and isinstance(b, CartProd):
        return Rewritten([[_c("neq", b.left, EMPTY), _c("neq", b.right, EMPTY)]])
    if isinstance(b, EmptySet) and isinstance(a, CartProd):
        return Rewritten([[_c("neq", a.left, EMPTY), _c("neq", a.right, EMPTY)]])
    if isinstance(a, EmptySet) and isinstance(b, ExtSet) or (
        isinstance(b, EmptySet) and isinstance(a, ExtSet)
    ):
        return true_outcome()
    branches = []
    for n in fresh_elems(g):
        branches.append([_c("in", n, a), _c("nin", n, b)])
        branches.append([_c("nin", n, a), _c("in", n, b)])
    return Rewritten(branches)


# ---------------------------------------------------------------------------
# Membership


@rule("in", "in_empty", "t in {}", "false")
def in_empty(con, g):
    if isinstance(con.args[1], EmptySet):
        return FALSE
    return None


@rule("in", "in_self", "X in X or X in a set containing X", "false")
def in_self(con, g):
    x, s = con.args
    if isinstance(x, Var) and x.name in free_vars(s):
        if isinstance(s, Var):
            return FALSE  # X in X is ill-founded
    return None


@rule("in", "in_ext", "x in {t|A}", "2")
def in_ext(con, g):
    x, s = con.args
    if isinstance(s, ExtSet):
        return Rewritten([[eq(x, s.elem)], [_c("in", x, s.rest)]])
    return None


@rule("in", "in_cp", "x in cp(A,B) (pair decomposition)", "1 per pair reading")
def in_cp(con, g):
    x, s = con.args
    if not isinstance(s, CartProd):
        return None
    alts = match_pair(x, g)
    if not alts:
        return FALSE
    branches = [
        prefix + [_c("in", first, s.left), _c("in", second, s.right)]
        for first, second, prefix in alts
    ]
    return Rewritten(branches)


@rule("in", "in_var", "x in A: A = {x|N}", "1")
def in_var(con, g):
    x, s = con.args
    if isinstance(s, Var):
        n = g.fresh(Sort.SET)
        return Rewritten([[eq(s, ExtSet(x, n))]])
    return None


@rule("nin", "nin_empty", "t nin {}", "true")
def nin_empty(con, g):
    if isinstance(con.args[1], EmptySet):
        return true_outcome()
    return None


@rule("nin", "nin_self", "X nin X", "true")
def nin_self(con, g):
    x, s = con.args
    if isinstance(x, Var) and isinstance(s, Var) and x == s:
        return true_outcome()
    return None


@rule("nin", "nin_ext", "x nin {t|A}", "1")
def nin_ext(con, g):
    x, s = con.args
    if isinstance(s, ExtSet):
        return Rewritten([[_c("neq", x, s.elem), _c("nin", x, s.rest)]])
    return None


@rule("nin", "nin_cp", "x nin cp(A,B)", "up to 9")
def nin_cp(con, g):
    x, s = con.args
    if not isinstance(s, CartProd):
        return None
    if isinstance(x, Pair):
        return Rewritten(
            [[_c("nin", x.first, s.left)], [_c("nin", x.second, s.right)]]
        )
    if isinstance(x, Var) and x.sort is Sort.O:
        branches = [[_c("npair", x)]]
        for first, second, prefix in match_pair(x, g):
            branches.append(prefix + [_c("nin", first, s.left)])
        for first, second, prefix in match_pair(x, g):
            branches.append(prefix + [_c("nin", second, s.right)])
        return Rewritten(branches)
    return true_outcome()  # sets and non-pair objects are never in a product


# ---------------------------------------------------------------------------
# Union


@rule("un", "un_result_empty", "un(A,B,{})", "1")
def un_result_empty(con, g):
    a, b, r = con.args
    if isinstance(r, EmptySet):
        return Rewritten([[eq(a, EMPTY), eq(b, EMPTY)]])
    return None


@rule("un", "un_left_empty", "un({},B,C)", "1")
def un_left_empty(con, g):
    a, b, r = con.args
    if isinstance(a, EmptySet):
        return Rewritten([[eq(b, r)]])
    return None


@rule("un", "un_right_empty", "un(A,{},C)", "1")
def un_right_empty(con, g):
    a, b, r = con.args
    if isinstance(b, EmptySet):
        return Rewritten([[eq(a, r)]])
    return None


@rule("un", "un_idempotent", "un(A,A,C)", "1")
def un_idempotent(con, g):
    a, b, r = con.args
    if a == b:
        return Rewritten([[eq(r, a)]])
    return None


@rule("un", "un_subset_form", "un(A,B,B): subset membership chain", "1 or solved")
def un_subset_form(con, g):
    # un(A,B,B) says A is a subset of B; peel extensional elements of the
    # subset side into memberships instead of running the general rule.
    a, b, r = con.args
    if r == b:
        sub = a
    elif r == a:
        sub = b
    else:
        return None
    if isinstance(sub, EmptySet):
        return true_outcome()
    if isinstance(sub, ExtSet):
        return Rewritten(
            [[_c("in", sub.elem, r), _c("un", sub.rest, r, r)]]
        )
    return None  # variable or product subset side is solved


def _is_subset_form(con) -> bool:
    a, b, r = con.args
    return r == a or r == b


@rule("un", "un_cp_headed", "un(cp({t|A'},{y|B'}),B,C): materialize the head pair", "1")
def un_cp_headed(con, g):
    # A product of two element-headed sets contains the pair of heads,
    # so the union result does too; the remaining product sections stay
    # inert until something instantiates them.
    a, b, r = con.args
    if _is_subset_form(con):
        return None
    for cp_arg, other, swapped in ((a, b, False), (b, a, True)):
        if not isinstance(cp_arg, CartProd):
            continue
        left, right = cp_arg.left, cp_arg.right
        if not (isinstance(left, ExtSet) and isinstance(right, ExtSet)):
            continue
        t, a_rest = left.elem, left.rest
        y, b_rest = right.elem, right.rest
        m = g.fresh(Sort.SET)
        r2 = g.fresh(Sort.SET)
        rest_prod = _c(
            "un",
            CartProd(ExtSet(t, EMPTY), b_rest),
            CartProd(a_rest, right),
            m,
        )
        glue = _c("un", m, other, r2) if not swapped else _c("un", other, m, r2)
        return Rewritten(
            [[rest_prod, glue, eq(r, ExtSet(Pair(t, y), r2))]]
        )
    return None


@rule("un", "un_result_ext", "un(A,B,{t|C})", "3")
def un_result_ext(con, g):
    a, b, r = con.args
    if not isinstance(r, ExtSet) or _is_subset_form(con):
        return None
    t = r.elem
    n = g.fresh(Sort.SET)
    n1 = g.fresh(Sort.SET)
    n2 = g.fresh(Sort.SET)
    common = [eq(r, ExtSet(t, n)), _c("nin", t, n)]
    return Rewritten(
        [
            common + [eq(a, ExtSet(t, n1)), _c("un", n1, b, n)],
            common + [eq(b, ExtSet(t, n1)), _c("un", a, n1, n)],
            common
            + [eq(a, ExtSet(t, n1)), eq(b, ExtSet(t, n2)), _c("un", n1, n2, n)],
        ]
    )


@rule("un", "un_arg_ext", "un({t|A'},B,C) or un(A,{t|B'},C)", "2")
def un_arg_ext(con, g):
    a, b, r = con.args
    if _is_subset_form(con):
        return None
    if isinstance(a, ExtSet):
        t, swap = a.elem, False
        first, other = a, b
    elif isinstance(b, ExtSet):
        t, swap = b.elem, True
        first, other = b, a
    else:
        return None
    n1 = g.fresh(Sort.SET)
    n2 = g.fresh(Sort.SET)
    n3 = g.fresh(Sort.SET)
    common = [
        eq(first, ExtSet(t, n1)),
        _c("nin", t, n1),
        eq(r, ExtSet(t, n2)),
        _c("nin", t, n2),
    ]
    if not swap:
        b1 = common + [_c("nin", t, other), _c("un", n1, other, n2)]
        b2 = common + [eq(other, ExtSet(t, n3)), _c("nin", t, n3), _c("un", n1, n3, n2)]
    else:
        b1 = common + [_c("nin", t, other), _c("un", other, n1, n2)]
        b2 = common + [eq(other, ExtSet(t, n3)), _c("nin", t, n3), _c("un", n3, n1, n2)]
    return Rewritten([b1, b2])


@rule("nun", "nun_witness", "nun(A,B,C): separating element", "6")
def nun_witness(con, g):
    a, b, r = con.args
    branches = []
    for n in fresh_elems(g):
        branches.append([_c("in", n, r), _c("nin", n, a), _c("nin", n, b)])
        branches.append([_c("in", n, a), _c("nin", n, r)])
        branches.append([_c("in", n, b), _c("nin", n, r)])
    return Rewritten(branches)


# ---------------------------------------------------------------------------
# Disjointness


@rule("disj", "disj_empty", "disj({},B) / disj(A,{})", "true")
def disj_empty(con, g):
    a, b = con.args
    if isinstance(a, EmptySet) or isinstance(b, EmptySet):
        return true_outcome()
    return None


@rule("disj", "disj_self", "disj(A,A)", "1")
def disj_self(con, g):
    a, b = con.args
    if a == b:
        return Rewritten([[eq(a, EMPTY)]])
    return None


@rule("disj", "disj_ext", "disj({t|A'},B)", "1")
def disj_ext(con, g):
    a, b = con.args
    if isinstance(a, ExtSet):
        return Rewritten([[_c("nin", a.elem, b), _c("disj", a.rest, b)]])
    if isinstance(b, ExtSet):
        return Rewritten([[_c("nin", b.elem, a), _c("disj", a, b.rest)]])
    return None


@rule("ndisj", "ndisj_witness", "ndisj(A,B): common element", "2")
def ndisj_witness(con, g):
    a, b = con.args
    return Rewritten([[_c("in", n, a), _c("in", n, b)] for n in fresh_elems(g)])


# ---------------------------------------------------------------------------
# Sort assertions


@rule("set", "set_resolve", "set(t)", "true/false")
def set_resolve(con, g):
    (t,) = con.args
    if isinstance(t, Var):
        return true_outcome() if t.sort is Sort.SET else FALSE
    return true_outcome() if term_sort(t) is Sort.SET else FALSE


@rule("nset", "nset_resolve", "nset(t)", "true/false")
def nset_resolve(con, g):
    (t,) = con.args
    if isinstance(t, Var):
        return FALSE if t.sort is Sort.SET else true_outcome()
    return FALSE if term_sort(t) is Sort.SET else true_outcome()


@rule("pair", "pair_resolve", "pair(t)", "true/false/solved")
def pair_resolve(con, g):
    (t,) = con.args
    if isinstance(t, Pair):
        return true_outcome()
    if isinstance(t, Var):
        if t.sort is Sort.SET:
            return FALSE
        return None  # solved: an object variable may become a pair
    return FALSE


@rule("npair", "npair_resolve", "npair(t)", "true/false/solved")
def npair_resolve(con, g):
    (t,) = con.args
    if isinstance(t, Pair):
        return FALSE
    if isinstance(t, Var):
        if t.sort is Sort.SET:
            return true_outcome()
        return None  # solved
    return true_outcome()


@rule("rel", "rel_empty", "rel({})", "true")
def rel_empty(con, g):
    if isinstance(con.args[0], EmptySet):
        return true_outcome()
    return None


@rule("rel", "rel_cp", "rel(cp(A,B))", "true")
def rel_cp(con, g):
    if isinstance(con.args[0], CartProd):
        return true_outcome()
    return None


@rule("rel", "rel_ext", "rel({t|A})", "1")
def rel_ext(con, g):
    (t,) = con.args
    if isinstance(t, ExtSet):
        return Rewritten([[_c("pair", t.elem), _c("rel", t.rest)]])
    return None


@rule("rel", "rel_var_obj", "rel on object term", "false")
def rel_var_obj(con, g):
    (t,) = con.args
    if term_sort(t) is not Sort.SET:
        return FALSE
    return None  # rel(X) with X a set variable is solved


@rule("nrel", "nrel_resolve", "nrel(t)", "varies")
def nrel_resolve(con, g):
    (t,) = con.args
    if isinstance(t, EmptySet) or isinstance(t, CartProd):
        return FALSE
    if isinstance(t, ExtSet):
        return Rewritten([[_c("npair", t.elem)], [_c("nrel", t.rest)]])
    if term_sort(t) is not Sort.SET:
        return true_outcome()
    # Set variable: it must contain a non-pair member.
    n_o, n_s = fresh_elems(g)
    m1, m2 = g.fresh(Sort.SET), g.fresh(Sort.SET)
    return Rewritten(
        [
            [eq(t, ExtSet(n_o, m1)), _c("npair", n_o)],
            [eq(t, ExtSet(n_s, m2))],
        ]
    )


# ---------------------------------------------------------------------------
# Identity relation: id(A, R) means R = {(x,x) : x in A}


@rule("id", "id_self", "id(A,A)", "1")
def id_self(con, g):
    a, r = con.args
    if a == r:
        return Rewritten([[eq(a, EMPTY)]])  # members would be ill-founded
    return None


@rule("id", "id_empty_set", "id({},R)", "1")
def id_empty_set(con, g):
    a, r = con.args
    if isinstance(a, EmptySet):
        return Rewritten([[eq(r, EMPTY)]])
    return None


@rule("id", "id_empty_rel", "id(A,{})", "1")
def id_empty_rel(con, g):
    a, r = con.args
    if isinstance(r, EmptySet):
        return Rewritten([[eq(a, EMPTY)]])
    return None


@rule("id", "id_set_ext", "id({x|A'},R)", "1")
def id_set_ext(con, g):
    a, r = con.args
    if isinstance(a, ExtSet):
        n = g.fresh(Sort.SET)
        return Rewritten(
            [[eq(r, ExtSet(Pair(a.elem, a.elem), n)), _c("id", a.rest, n)]]
        )
    return None


@rule("id", "id_rel_ext", "id(A,{p|R'})", "1 per pair reading")
def id_rel_ext(con, g):
    a, r = con.args
    if not isinstance(r, ExtSet):
        return None
    p = r.elem
    alts = match_pair(p, g)
    if not alts:
        return FALSE
    branches = []
    for first, second, prefix in alts:
        n_rest = g.fresh(Sort.SET)
        n2 = g.fresh(Sort.SET)
        branches.append(
            prefix
            + [
                eq(first, second),
                eq(r, ExtSet(p, n_rest)),
                _c("nin", p, n_rest),
                eq(a, ExtSet(first, n2)),
                _c("nin", first, n2),
                _c("id", n2, n_rest),
            ]
        )
    return Rewritten(branches)


@rule("nid", "nid_witness", "nid(A,R)", "11")
def nid_witness(con, g):
    a, r = con.args
    branches = []
    for n in fresh_elems(g):
        branches.append([_c("in", n, a), _c("nin", Pair(n, n), r)])
    for s1 in ELEM_SORTS:
        for s2 in ELEM_SORTS:
            n1, n2 = g.fresh(s1), g.fresh(s2)
            branches.append([_c("in", Pair(n1, n2), r), _c("nin", n1, a)])
    for s1 in ELEM_SORTS:
        for s2 in ELEM_SORTS:
            n1, n2 = g.fresh(s1), g.fresh(s2)
            branches.append([_c("in", Pair(n1, n2), r), _c("neq", n1, n2)])
    branches.append([_c("nrel", r)])
    return Rewritten(branches)


# ---------------------------------------------------------------------------
# Converse: inv(R, S) means S is the converse of R


@rule("inv", "inv_left_empty", "inv({},S)", "1")
def inv_left_empty(con, g):
    r, s = con.args
    if isinstance(r, EmptySet):
        return Rewritten([[eq(s, EMPTY)]])
    return None


@rule("inv", "inv_right_empty", "inv(R,{})", "1")
def inv_right_empty(con, g):
    r, s = con.args
    if isinstance(s, EmptySet):
        return Rewritten([[eq(r, EMPTY)]])
    return None


@rule("inv", "inv_cp", "inv over cartesian products", "1")
def inv_cp(con, g):
    r, s = con.args
    if isinstance(r, CartProd):
        return Rewritten([[eq(s, CartProd(r.right, r.left))]])
    if isinstance(s, CartProd):
        return Rewritten([[eq(r, CartProd(s.right, s.left))]])
    return None


@rule("inv", "inv_self_tail", "inv({p1..pk|S},S) or inv(S,{q1..qm|S})",
      "1 per pair reading")
def inv_self_tail(con, g):
    # conv({ps} u S) = S forces every pi and its swap into S; the
    # remainder W is then exactly self-converse, which is inert.
    r, s = con.args
    ext_side = None
    if isinstance(r, ExtSet) and isinstance(s, Var):
        elems, tail = spine(r)
        if isinstance(tail, Var) and tail == s:
            ext_side = elems
            var_side = s
    if ext_side is None and isinstance(s, ExtSet) and isinstance(r, Var):
        elems, tail = spine(s)
        if isinstance(tail, Var) and tail == r:
            ext_side = elems
            var_side = r
    if ext_side is None:
        return None
    alts = _swap_spine_branches(ext_side, g)
    if alts is None:
        return FALSE
    branches = []
    for prefix, swaps in alts:
        w = g.fresh(Sort.SET)
        members = []
        # prefix constraints bind variable elements to pair shapes; the
        # matched pairs are the swaps' swaps.
        for sw in swaps:
            p = Pair(sw.second, sw.first)
            for m in (sw, p):
                if m not in members:
                    members.append(m)
        pattern: Term = w
        for m in reversed(members):
            pattern = ExtSet(m, pattern)
        branch = list(prefix) + [eq(var_side, pattern)]
        branch += [_c("nin", m, w) for m in members]
        branch.append(_c("inv", w, w))
        branches.append(branch)
    return Rewritten(branches)


def _swap_spine_branches(elems, g):
    """Alternatives for reading every spine element as a pair, with the
    list of swapped pairs; each alternative carries prefix constraints."""
    alts = [([], [])]
    for e in elems:
        readings = match_pair(e, g)
        if not readings:
            return None
        new_alts = []
        for pre, swaps in alts:
            for first, second, prefix in readings:
                new_alts.append((pre + prefix, swaps + [Pair(second, first)]))
        alts = new_alts
    return alts


@rule("inv", "inv_right_ext", "inv(R,{q1..qm|S'}): R = {swap(qi)..|N} & inv(S',N)",
      "1 per pair reading")
def inv_right_ext(con, g):
    # Whole-spine form of the converse rule: the converse is involutive,
    # so R unifies with the swapped spine in one step and the recursion
    # runs on the syntactic tail only.
    r, s = con.args
    if not isinstance(s, ExtSet):
        return None
    elems, tail = spine(s)
    alts = _swap_spine_branches(elems, g)
    if alts is None:
        return FALSE
    branches = []
    for prefix, swaps in alts:
        n = g.fresh(Sort.SET)
        pattern: Term = n
        for p in reversed(swaps):
            pattern = ExtSet(p, pattern)
        branches.append(prefix + [eq(r, pattern), _c("inv", tail, n)])
    return Rewritten(branches)


@rule("inv", "inv_left_ext", "inv({p1..pk|R'},S): S = {swap(pi)..|N} & inv(R',N)",
      "1 per pair reading")
def inv_left_ext(con, g):
    r, s = con.args
    if not isinstance(r, ExtSet):
        return None
    elems, tail = spine(r)
    alts = _swap_spine_branches(elems, g)
    if alts is None:
        return FALSE
    branches = []
    for prefix, swaps in alts:
        n = g.fresh(Sort.SET)
        pattern: Term = n
        for p in reversed(swaps):
            pattern = ExtSet(p, pattern)
        branches.append(prefix + [eq(s, pattern), _c("inv", tail, n)])
    return Rewritten(branches)


@rule("ninv", "ninv_expansion", "ninv(R,S): negation-note expansion", "10")
def ninv_expansion(con, g):
    r, s = con.args
    branches = []
    for s1 in ELEM_SORTS:
        for s2 in ELEM_SORTS:
            n1, n2 = g.fresh(s1), g.fresh(s2)
            branches.append(
                [_c("in", Pair(n1, n2), r), _c("nin", Pair(n2, n1), s)]
            )
    for s1 in ELEM_SORTS:
        for s2 in ELEM_SORTS:
            n1, n2 = g.fresh(s1), g.fresh(s2)
            branches.append(
                [_c("nin", Pair(n1, n2), r), _c("in", Pair(n2, n1), s)]
            )
    branches.append([_c("nrel", r)])
    branches.append([_c("nrel", s)])
    return Rewritten(branches)


# ---------------------------------------------------------------------------
# Composition: comp(R, S, T) means T = R ; S


def _singleton(t: Term):
    if isinstance(t, ExtSet) and isinstance(t.rest, EmptySet):
        return t.elem
    return None


@rule("comp", "comp_empty_arg", "comp({},S,T) / comp(R,{},T)", "1")
def comp_empty_arg(con, g):
    r, s, t = con.args
    if isinstance(r, EmptySet) or isinstance(s, EmptySet):
        return Rewritten([[eq(t, EMPTY)]])
    return None


@rule("comp", "comp_result_ext", "comp(R,S,{p|T'}): witness the head, recurse on the spine", "2 per pair reading")
def comp_result_ext(con, g):
    # The head pair needs a middle witness in R and S; the remaining
    # composition equality is re-asserted against a fresh tail bound by
    # a same-head unification, so progress follows the result's spine.
    r, s, t = con.args
    if not isinstance(t, ExtSet):
        return None
    if t == r or t == s:
        return None  # self-shaped composition stays inert
    alts = match_pair(t.elem, g)
    if not alts:
        return FALSE
    branches = []
    for first, second, prefix in alts:
        for mid_sort in ELEM_SORTS:
            y = g.fresh(mid_sort)
            n2, n3, n4 = g.fresh(Sort.SET), g.fresh(Sort.SET), g.fresh(Sort.SET)
            e = Pair(first, y)
            q = Pair(y, second)
            branches.append(
                prefix
                + [
                    eq(r, ExtSet(e, n2)),
                    _c("nin", e, n2),
                    eq(s, ExtSet(q, n3)),
                    _c("nin", q, n3),
                    _c("comp", r, s, n4),
                    eq(t, ExtSet(t.elem, n4)),
                ]
            )
    return Rewritten(branches)


@rule("comp", "comp_left_ext_empty", "comp({(x,y)|R'},S,{}): y misses dom S", "1 per pair reading")
def comp_left_ext_empty(con, g):
    r, s, t = con.args
    if not (isinstance(t, EmptySet) and isinstance(r, ExtSet)):
        return None
    alts = match_pair(r.elem, g)
    if not alts:
        return FALSE
    branches = []
    for _x, y, prefix in alts:
        ds = g.fresh(Sort.SET)
        branches.append(
            prefix + [_c("dom", s, ds), _c("nin", y, ds), _c("comp", r.rest, s, EMPTY)]
        )
    return Rewritten(branches)


@rule("comp", "comp_right_ext_empty", "comp(R,{(y,z)|S'},{}): y misses ran R", "1 per pair reading")
def comp_right_ext_empty(con, g):
    r, s, t = con.args
    if not (isinstance(t, EmptySet) and isinstance(s, ExtSet)):
        return None
    alts = match_pair(s.elem, g)
    if not alts:
        return FALSE
    branches = []
    for y, _z, prefix in alts:
        rr = g.fresh(Sort.SET)
        branches.append(
            prefix + [_c("ran", r, rr), _c("nin", y, rr), _c("comp", r, s.rest, EMPTY)]
        )
    return Rewritten(branches)


@rule("comp", "comp_single_ext", "comp({e},{q|S'},T)", "2 per pair reading")
def comp_single_ext(con, g):
    r, s, t = con.args
    e = _singleton(r)
    if e is None or not isinstance(s, ExtSet):
        return None
    e_alts = match_pair(e, g)
    if not e_alts:
        return FALSE
    q_alts_probe = match_pair(s.elem, g)
    if not q_alts_probe:
        return FALSE
    branches = []
    for x1, x2, pre_e in e_alts:
        for y1, y2, pre_q in match_pair(s.elem, g):
            n = g.fresh(Sort.SET)
            branches.append(
                pre_e
                + pre_q
                + [
                    eq(x2, y1),
                    eq(t, ExtSet(Pair(x1, y2), n)),
                    _c("comp", r, s.rest, n),
                ]
            )
            branches.append(
                pre_e + pre_q + [_c("neq", x2, y1), _c("comp", r, s.rest, t)]
            )
    return Rewritten(branches)


@rule("comp", "comp_left_ext", "comp({e|R'},S,T): split the left argument", "1")
def comp_left_ext(con, g):
    r, s, t = con.args
    if not isinstance(r, ExtSet) or _singleton(r) is not None:
        return None
    ta, tb = g.fresh(Sort.SET), g.fresh(Sort.SET)
    return Rewritten(
        [
            [
                _c("comp", ExtSet(r.elem, EMPTY), s, ta),
                _c("comp", r.rest, s, tb),
                _c("un", ta, tb, t),
            ]
        ]
    )


@rule("comp", "comp_right_ext", "comp(R,{q|S'},T): split the right argument", "1")
def comp_right_ext(con, g):
    r, s, t = con.args
    if not isinstance(s, ExtSet) or _singleton(s) is not None:
        return None
    if _singleton(r) is not None or isinstance(r, ExtSet):
        return None
    ta, tb = g.fresh(Sort.SET), g.fresh(Sort.SET)
    return Rewritten(
        [
            [
                _c("comp", r, ExtSet(s.elem, EMPTY), ta),
                _c("comp", r, s.rest, tb),
                _c("un", ta, tb, t),
            ]
        ]
    )


@rule("ncomp", "ncomp_flip", "ncomp(R,S,T): some composition differs", "3")
def ncomp_flip(con, g):
    r, s, t = con.args
    n = g.fresh(Sort.SET)
    return Rewritten(
        [
            [_c("nrel", r)],
            [_c("nrel", s)],
            [_c("comp", r, s, n), _c("neq", n, t)],
        ]
    )


# ---------------------------------------------------------------------------
# The sweep: apply rules across a conjunction, once per constraint,
# consuming variable bindings eagerly.


def bindable(con: Constraint):
    """(var, image) when con is a clean eliminable equality, else None."""
    if con.kind != "eq":
        return None
    a, b = con.args
    if isinstance(a, Var) and a.name not in free_vars(b):
        try:
            if term_sort(b) is a.sort:
                return a, b
        except Exception:
            return None
    if isinstance(b, Var) and b.name not in free_vars(a):
        try:
            if term_sort(a) is b.sort:
                return b, a
        except Exception:
            return None
    return None


def _occurs_elsewhere(name: str, done: list, todo: list, skip) -> bool:
    for lst in (done, todo):
        for con in lst:
            if con is skip:
                continue
            if name in free_vars(con):
                return True
    return False


def _substitute_lists(var: Var, img: Term, done: list, todo: list) -> None:
    s = Substitution({var.name: img}, _trusted=True)
    for lst in (done, todo):
        for i, con in enumerate(lst):
            if var.name in free_vars(con):
                lst[i] = s.apply_constraint(con)


def _append_done(done: list, con: Constraint) -> None:
    if con not in done:
        done.append(con)


def _absorb(done: list, todo: list, new_constraints: list) -> bool:
    """Add freshly produced constraints, consuming eliminable equalities
    and constant-folding ground facts.  False means the branch died."""
    queue = list(new_constraints)
    while queue:
        con = queue.pop(0)
        if statically_false(con):
            return False
        if is_ground(con):
            verdict = _ground_eval(con)
            if verdict is False:
                return False
            if verdict is True:
                continue
        m = bindable(con)
        if m is not None:
            var, img = m
            if (
                _occurs_elsewhere(var.name, done, todo, con)
                or any(var.name in free_vars(q) for q in queue)
            ):
                _substitute_lists(var, img, done, todo)
                s = Substitution({var.name: img}, _trusted=True)
                queue = [s.apply_constraint(q) for q in queue]
                _append_done(done, Constraint("eq", (var, img)))
                continue
            _append_done(done, Constraint("eq", (var, img)))
            continue
        _append_done(done, con)
    return True


def _clashes(conj: list) -> bool:
    pos = {c.args[0].name for c in conj if c.kind == "pair" and isinstance(c.args[0], Var)}
    neg = {c.args[0].name for c in conj if c.kind == "npair" and isinstance(c.args[0], Var)}
    return bool(pos & neg)


def _consume_pass(done: list, todo: list) -> int:
    """Eliminate bindable equalities up front (bindings applied eagerly)."""
    consumed = 0
    i = 0
    while i < len(todo):
        con = todo[i]
        m = bindable(con)
        if m is not None and _occurs_elsewhere(m[0].name, done, todo, con):
            var, img = m
            del todo[i]
            _substitute_lists(var, img, done, todo)
            _append_done(done, Constraint("eq", (var, img)))
            consumed += 1
            continue
        i += 1
    return consumed


def sweep(conj: Conj, g: VarGen):
    """One left-to-right pass.  Returns (list of successor conjunctions,
    number of rule applications).  An empty list means false everywhere."""
    fired = 0
    finals: list = []
    first_done: list = []
    first_todo = list(conj)
    fired += _consume_pass(first_done, first_todo)
    stack = [(first_done, first_todo)]
    while stack:
        done, todo = stack.pop()
        dead = False
        while todo:
            con = todo.pop(0)
            out = rewrite_constraint(con, g)
            if out is FALSE:
                fired += 1
                dead = True
                break
            if out is UNCHANGED:
                m = bindable(con)
                if m is not None:
                    var, img = m
                    if _occurs_elsewhere(var.name, done, todo, con):
                        fired += 1
                        _substitute_lists(var, img, done, todo)
                        _append_done(done, Constraint("eq", (var, img)))
                        continue
                    _append_done(done, Constraint("eq", (var, img)))
                    continue
                _append_done(done, con)
                continue
            # Rewritten: fork one state per branch; branch constraints are
            # absorbed (bindings applied, ground facts folded) but not
            # rewritten this sweep.
            fired += 1
            branches = out.branches
            for br in reversed(branches):
                new_done = list(done)
                new_todo = list(todo)
                if _absorb(new_done, new_todo, br):
                    stack.append((new_done, new_todo))
            dead = True  # current state replaced by its forks
            break
        if not dead:
            if _clashes(done):
                fired += 1
                continue
            finals.append(tuple(done))
    return finals, fired


def step(f: Conj, g: VarGen):
    """Apply rewriting procedures across the conjunction once.

    Returns FALSE when every branch is inconsistent, otherwise the list
    of successor conjunctions (a single unchanged conjunction at fixpoint).
    """
    finals, fired = sweep(f, g)
    if not finals:
        return FALSE
    return finals


# ---------------------------------------------------------------------------
# Incremental engine: the solver keeps constraints that were already
# dispatched and not substituted since ("quiet") apart from constraints
# that still need rule dispatch ("active").  Rule applicability depends
# only on a constraint's own shape, so substitution is the only event
# that re-activates a quiet constraint.


def _fold_new(con: Constraint):
    """Verdict for a just-substituted constraint: True (drop), False
    (branch dead) or None (keep)."""
    if statically_false(con):
        return False
    quick = quick_verdict(con)
    if quick is not None:
        return quick
    if is_ground(con):
        return _ground_eval(con)
    return None


def _subst_touch(var: Var, img: Term, quiet: list, pending: list, todo: list) -> bool:
    """Apply a binding through the state; False when it became dead."""
    s = Substitution({var.name: img}, _trusted=True)
    alive = True
    for lst in (pending, todo):
        out = []
        for con in lst:
            if var.name in free_vars(con):
                new = dedup_constraint(s.apply_constraint(con))
                verdict = _fold_new(new)
                if verdict is False:
                    alive = False
                if verdict is None:
                    out.append(new)
            else:
                out.append(con)
        lst[:] = out
    moved = []
    kept = []
    for con in quiet:
        if var.name in free_vars(con):
            new = dedup_constraint(s.apply_constraint(con))
            verdict = _fold_new(new)
            if verdict is False:
                alive = False
            if verdict is None:
                moved.append(new)
        else:
            kept.append(con)
    quiet[:] = kept
    todo.extend(moved)
    return alive


def _occurs_any(name: str, lists, skip) -> bool:
    for lst in lists:
        for con in lst:
            if con is skip:
                continue
            if name in free_vars(con):
                return True
    return False


def _absorb_inc(quiet: list, pending: list, todo: list, new_constraints) -> bool:
    """Fold and store freshly produced constraints; False kills the branch."""
    queue = [dedup_constraint(c) for c in new_constraints]
    while queue:
        con = queue.pop(0)
        if statically_false(con):
            return False
        quick = quick_verdict(con)
        if quick is False:
            return False
        if quick is True:
            continue
        if is_ground(con):
            verdict = _ground_eval(con)
            if verdict is False:
                return False
            if verdict is True:
                continue
        m = bindable(con)
        if m is not None:
            var, img = m
            if _occurs_any(var.name, (quiet, pending, todo), con) or any(
                var.name in free_vars(q) for q in queue
            ):
                if not _subst_touch(var, img, quiet, pending, todo):
                    return False
                s = Substitution({var.name: img}, _trusted=True)
                queue = [s.apply_constraint(q) for q in queue]
            if var.name.startswith(FRESH_PREFIX):
                # A solver variable bound and referenced nowhere else is
                # existential garbage: the equality names a value and
                # constrains nothing.
                continue
            norm = Constraint("eq", (var, img))
            if norm not in quiet:
                quiet.append(norm)
            continue
        if con not in quiet and con not in pending:
            pending.append(con)
    return True


# Dispatch priority: cheap deterministic constraints first, speculative
# relational composition last, so structures materialize before they are
# witnessed.
_KIND_PRIORITY = {
    "eq": 0,
    "neq": 1, "in": 1, "nin": 1, "set": 1, "nset": 1, "pair": 1,
    "npair": 1, "rel": 1, "nrel": 1,
    "un": 2, "nun": 2, "disj": 2, "ndisj": 2, "inters": 2, "ninters": 2,
    "diff": 2, "ndiff": 2, "subset": 2, "nsubset": 2,
    "id": 3, "nid": 3, "inv": 3, "ninv": 3, "dom": 3, "ndom": 3,
    "ran": 3, "nran": 3, "pfun": 3, "npfun": 3, "apply": 3, "napply": 3,
    "dres": 3, "rres": 3, "dares": 3, "rares": 3, "rimg": 3, "nrimg": 3,
    "oplus": 3, "noplus": 3,
    "comp": 4, "ncomp": 4,
}


def _pick_next(todo: list):
    best = 0
    best_rank = _KIND_PRIORITY.get(todo[0].kind, 3)
    for i in range(1, len(todo)):
        if best_rank == 0:
            break
        rank = _KIND_PRIORITY.get(todo[i].kind, 3)
        if rank < best_rank:
            best, best_rank = i, rank
    return todo.pop(best)


def advance(quiet0: list, active0: list, g: VarGen):
    """Dispatch active constraints until one rule fires; apply it.

    Returns (successors, fired) where each successor is (quiet, active).
    A successor with no active constraints is at a fixpoint.  Keeping a
    single rule application per call lets the caller enforce budgets and
    explore branches in its own order.
    """
    quiet, todo = list(quiet0), list(active0)
    fired = 0
    while todo:
        con = _pick_next(todo)
        res = rewrite_constraint(con, g)
        if res is FALSE:
            return [], fired + 1
        if res is UNCHANGED:
            m = bindable(con)
            if m is not None:
                var, img = m
                if _occurs_any(var.name, (quiet, todo), con):
                    fired += 1
                    if not _subst_touch_2(var, img, quiet, todo):
                        return [], fired
                if var.name.startswith(FRESH_PREFIX):
                    continue  # unreferenced solver binding: drop
                norm = Constraint("eq", (var, img))
                if norm not in quiet:
                    quiet.append(norm)
                continue
            if con not in quiet:
                quiet.append(con)
            continue
        # A rule fired: fork one successor per branch and return.
        fired += 1
        out = []
        for br in res.branches:
            q2, p2, t2 = list(quiet), [], list(todo)
            if _absorb_inc(q2, p2, t2, br):
                out.append((q2, t2 + p2))
        return out, fired
    if _clashes(quiet):
        return [], fired + 1
    return [(quiet, [])], fired


def _subst_touch_2(var: Var, img: Term, quiet: list, todo: list) -> bool:
    empty: list = []
    return _subst_touch(var, img, quiet, empty, todo)


def seed_state(conj: Conj):
    """Initial (quiet, active) pair for a conjunction: bindings consumed,
    ground facts folded.  None when the conjunction is already false."""
    quiet: list = []
    pending: list = []
    todo: list = []
    if not _absorb_inc(quiet, pending, todo, list(conj)):
        return None
    return quiet, pending + todo


def is_solved_form(conj: Conj) -> bool:
    """True iff no rule fires on any constraint and no equality is
    eliminable: the authoritative irreducibility check."""
    g = VarGen(counter=10**9)
    lst = list(conj)
    for i, con in enumerate(lst):
        if rewrite_constraint(con, g) is not UNCHANGED:
            return False
        m = bindable(con)
        if m is not None:
            var, _img = m
            if _occurs_elsewhere(var.name, lst, [], con):
                return False
    if _clashes(lst):
        return False
    return True


# ---------------------------------------------------------------------------
# Set unification


def unify_terms(t1: Term, t2: Term, g: VarGen, max_fires: int = 50_000):
    """Complete set of unifiers modulo the set equational axioms.

    Returns a list of (Substitution, residual constraints) pairs; an
    empty list means no unifier exists."""
    states = [(Constraint("eq", (t1, t2)),)]
    results = []
    fires = 0
    while states:
        conj = states.pop()
        finals, fired = sweep(conj, g)
        fires += fired
        if fires > max_fires:
            from .errors import BudgetTooLarge

            raise BudgetTooLarge("unification exceeded its rewrite budget")
        if fired == 0:
            for nxt in finals:
                bindings = {}
                residue = []
                for con in nxt:
                    m = bindable(con)
                    if m is not None and not _occurs_elsewhere(
                        m[0].name, list(nxt), [], con
                    ):
                        bindings[m[0].name] = m[1]
                    else:
                        residue.append(con)
                results.append(
                    (Substitution(bindings, _trusted=True), tuple(residue))
                )
        else:
            states.extend(finals)
    return results
