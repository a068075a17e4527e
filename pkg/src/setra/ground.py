"""Ground semantics: hereditarily finite hybrid set values, a constraint
evaluator, and a brute-force finite-model enumerator used as the
correctness oracle for the solver.

Ground values are either atoms, ordered pairs, or duplicate-free finite
sets; deep equality on sets is extensional by construction because sets
are stored as frozensets of hashable values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional

from .errors import BudgetTooLarge, SortError, UnboundVariable
from .terms import (
    And,
    CartProd,
    Conj,
    Constraint,
    EmptySet,
    ExtSet,
    Formula,
    KINDS,
    Or,
    Pair,
    Sort,
    Term,
    UrFunctor,
    Var,
    dnf,
    free_vars,
)


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class PairV:
    first: "HFValue"
    second: "HFValue"


@dataclass(frozen=True)
class SetV:
    members: frozenset = field(default_factory=frozenset)

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __contains__(self, v):
        return v in self.members


HFValue = object  # Atom | PairV | SetV

EMPTY_V = SetV()


def setv(items: Iterable = ()) -> SetV:
    return SetV(frozenset(items))


def value_key(v):
    """Total order on ground values: atoms, then pairs, then sets;
    within a category smaller values first, then lexicographically."""
    if isinstance(v, Atom):
        return (0, 0, v.name)
    if isinstance(v, PairV):
        return (1, value_size(v), (value_key(v.first), value_key(v.second)))
    if isinstance(v, SetV):
        return (2, value_size(v), tuple(sorted(value_key(m) for m in v.members)))
    raise TypeError(f"not a ground value: {v!r}")


def value_size(v) -> int:
    if isinstance(v, Atom):
        return 1
    if isinstance(v, PairV):
        return 1 + value_size(v.first) + value_size(v.second)
    if isinstance(v, SetV):
        return 1 + sum(value_size(m) for m in v.members)
    raise TypeError(f"not a ground value: {v!r}")


def render_value(v) -> str:
    if isinstance(v, Atom):
        return v.name
    if isinstance(v, PairV):
        return f"[{render_value(v.first)},{render_value(v.second)}]"
    if isinstance(v, SetV):
        inner = ",".join(render_value(m) for m in sorted(v.members, key=value_key))
        return "{" + inner + "}"
    raise TypeError(f"not a ground value: {v!r}")


def is_rel(v) -> bool:
    return isinstance(v, SetV) and all(isinstance(m, PairV) for m in v.members)


# ---------------------------------------------------------------------------
# Term and constraint evaluation

Assignment = dict  # variable name -> HFValue


def eval_term(t: Term, a: Assignment):
    if isinstance(t, Var):
        if t.name not in a:
            raise UnboundVariable(t.name)
        v = a[t.name]
        if t.sort is Sort.SET and not isinstance(v, SetV):
            raise SortError(f"set variable {t.name} bound to non-set value")
        if t.sort is Sort.O and isinstance(v, SetV):
            raise SortError(f"object variable {t.name} bound to a set value")
        return v
    if isinstance(t, UrFunctor):
        if not t.args:
            return Atom(t.name)
        rendered = ",".join(render_value(eval_term(x, a)) for x in t.args)
        # Herbrand interpretation: distinct ground functor terms denote
        # distinct objects, realized as atoms keyed by a canonical string.
        return Atom(f"{t.name}({rendered})")
    if isinstance(t, EmptySet):
        return EMPTY_V
    if isinstance(t, ExtSet):
        elem = eval_term(t.elem, a)
        rest = eval_term(t.rest, a)
        if not isinstance(rest, SetV):
            raise SortError("set part of an extensional set must evaluate to a set")
        return SetV(rest.members | {elem})
    if isinstance(t, CartProd):
        left = eval_term(t.left, a)
        right = eval_term(t.right, a)
        if not isinstance(left, SetV) or not isinstance(right, SetV):
            raise SortError("cartesian product arguments must evaluate to sets")
        return setv(PairV(x, y) for x in left for y in right)
    if isinstance(t, Pair):
        return PairV(eval_term(t.first, a), eval_term(t.second, a))
    raise TypeError(f"not a term: {t!r}")


def _compose(r: SetV, s: SetV) -> SetV:
    by_first: dict = {}
    for p in s.members:
        by_first.setdefault(p.first, []).append(p.second)
    out = set()
    for p in r.members:
        for z in by_first.get(p.second, ()):
            out.add(PairV(p.first, z))
    return setv(out)


def _converse(r: SetV) -> SetV:
    return setv(PairV(p.second, p.first) for p in r.members)


def _dom(r: SetV) -> SetV:
    return setv(p.first for p in r.members)


def _ran(r: SetV) -> SetV:
    return setv(p.second for p in r.members)


def _eval_positive(kind: str, vals: list) -> bool:
    if kind == "eq":
        return vals[0] == vals[1]
    if kind == "in":
        if not isinstance(vals[1], SetV):
            raise SortError("second argument of membership must be a set")
        return vals[0] in vals[1]
    if kind == "un":
        a, b, cv = vals
        return cv == SetV(a.members | b.members)
    if kind == "disj":
        return not (vals[0].members & vals[1].members)
    if kind == "set":
        return isinstance(vals[0], SetV)
    if kind == "pair":
        return isinstance(vals[0], PairV)
    if kind == "rel":
        return is_rel(vals[0])
    if kind == "id":
        a, r = vals
        return r == setv(PairV(x, x) for x in a.members)
    if kind == "inv":
        r, s = vals
        return is_rel(r) and is_rel(s) and s == _converse(r)
    if kind == "comp":
        r, s, t = vals
        return is_rel(r) and is_rel(s) and t == _compose(r, s)
    if kind == "inters":
        return vals[2] == SetV(vals[0].members & vals[1].members)
    if kind == "diff":
        return vals[2] == SetV(vals[0].members - vals[1].members)
    if kind == "subset":
        return vals[0].members <= vals[1].members
    if kind == "dom":
        return is_rel(vals[0]) and vals[1] == _dom(vals[0])
    if kind == "ran":
        return is_rel(vals[0]) and vals[1] == _ran(vals[0])
    if kind == "dres":
        a, r, s = vals
        return is_rel(r) and s == setv(p for p in r.members if p.first in a.members)
    if kind == "rres":
        r, a, s = vals
        return is_rel(r) and s == setv(p for p in r.members if p.second in a.members)
    if kind == "dares":
        a, r, s = vals
        return is_rel(r) and s == setv(p for p in r.members if p.first not in a.members)
    if kind == "rares":
        r, a, s = vals
        return is_rel(r) and s == setv(p for p in r.members if p.second not in a.members)
    if kind == "rimg":
        r, a, b = vals
        return is_rel(r) and b == setv(
            p.second for p in r.members if p.first in a.members
        )
    if kind == "oplus":
        r, s, t = vals
        if not (is_rel(r) and is_rel(s)):
            return False
        dom_s = _dom(s)
        kept = {p for p in r.members if p.first not in dom_s.members}
        return t == SetV(frozenset(kept) | s.members)
    if kind == "pfun":
        f = vals[0]
        if not is_rel(f):
            return False
        firsts = [p.first for p in f.members]
        return len(firsts) == len(set(firsts))
    if kind == "apply":
        f, x, y = vals
        return _eval_positive("pfun", [f]) and PairV(x, y) in f.members
    raise TypeError(f"no evaluator for constraint kind {kind}")


_NEGATED = {
    "neq": "eq", "nin": "in", "nun": "un", "ndisj": "disj", "nset": "set",
    "nrel": "rel", "npair": "pair", "nid": "id", "ninv": "inv",
    "ncomp": "comp", "ninters": "inters", "ndiff": "diff",
    "nsubset": "subset", "ndom": "dom", "nran": "ran", "nrimg": "rimg",
    "noplus": "oplus", "npfun": "pfun", "napply": "apply",
}


def eval_constraint(con: Constraint, a: Assignment) -> bool:
    vals = [eval_term(t, a) for t in con.args]
    if con.kind in _NEGATED:
        return not _eval_positive(_NEGATED[con.kind], vals)
    return _eval_positive(con.kind, vals)


def eval_formula(f: Formula, a: Assignment) -> bool:
    if isinstance(f, Constraint):
        return eval_constraint(f, a)
    if isinstance(f, And):
        return all(eval_formula(p, a) for p in f.parts)
    if isinstance(f, Or):
        return any(eval_formula(p, a) for p in f.parts)
    if isinstance(f, tuple):
        return all(eval_constraint(con, a) for con in f)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Universe construction


@dataclass(frozen=True)
class UniverseBudget:
    """Bounds for the enumeration universe.

    ``k``: number of anonymous atoms added to the constants of the
    formula; ``n``: maximum set cardinality; ``d``: maximum nesting depth
    of composites inside composites (a set of atoms has depth 0).  The
    value caps keep the materialized universe small; the node cap bounds
    the assignment search and raising past it is reported honestly.
    """

    k: int = 3
    n: int = 3
    d: int = 2
    max_pairs: int = 160
    max_sets: int = 260
    max_nodes: int = 400_000
    max_space: int = 50_000_000


@lru_cache(maxsize=256)
def build_universe(budget: UniverseBudget, constant_names: tuple = ()):
    """Ground values available to the enumerator, per sort.

    Returns (o_values, set_values), each sorted canonically (atoms before
    pairs before sets, then by size and lexicographically).
    """
    atoms = [Atom(name) for name in constant_names]
    atoms += [Atom(f"u{i}") for i in range(budget.k)]
    atoms = sorted(set(atoms), key=value_key)

    pairs: list = []
    sets: list = []
    pool = list(atoms)
    for _level in range(budget.d + 1):
        new_pairs = [PairV(x, y) for x in pool for y in pool]
        new_sets = []
        for size in range(budget.n + 1):
            for combo in itertools.combinations(pool, size):
                new_sets.append(setv(combo))
        pairs = sorted(set(pairs) | set(new_pairs), key=value_key)[: budget.max_pairs]
        sets = sorted(set(sets) | set(new_sets), key=value_key)[: budget.max_sets]
        pool = sorted(set(atoms) | set(pairs) | set(sets), key=value_key)
        # Keep the pool small enough that the next level stays tractable.
        pool = pool[: max(len(atoms), min(len(pool), 64))]
    o_values = atoms + pairs
    return tuple(o_values), tuple(sets)


def _constants_of(x, out: set):
    if isinstance(x, UrFunctor):
        if not x.args:
            out.add(x.name)
        for a in x.args:
            _constants_of(a, out)
    elif isinstance(x, (ExtSet,)):
        _constants_of(x.elem, out)
        _constants_of(x.rest, out)
    elif isinstance(x, CartProd):
        _constants_of(x.left, out)
        _constants_of(x.right, out)
    elif isinstance(x, Pair):
        _constants_of(x.first, out)
        _constants_of(x.second, out)
    elif isinstance(x, Constraint):
        for a in x.args:
            _constants_of(a, out)
    elif isinstance(x, (And, Or)):
        for p in x.parts:
            _constants_of(p, out)
    elif isinstance(x, tuple):
        for p in x:
            _constants_of(p, out)


# Constraint kinds whose listed argument slot is a function of the others.
_DETERMINED_SLOT = {
    "un": 2, "inters": 2, "diff": 2, "comp": 2, "dres": 2, "rres": 2,
    "dares": 2, "rares": 2, "rimg": 2, "oplus": 2, "id": 1, "inv": 1,
    "dom": 1, "ran": 1,
}


def _determine(kind: str, vals: dict, slot: int):
    """Value forced for the determined slot, or None when not computable.

    The enumeration loop re-checks every constraint with eval_constraint,
    so this only has to propose the unique candidate."""
    try:
        if kind == "un":
            return SetV(vals[0].members | vals[1].members)
        if kind == "inters":
            return SetV(vals[0].members & vals[1].members)
        if kind == "diff":
            return SetV(vals[0].members - vals[1].members)
        if kind == "comp":
            if not (is_rel(vals[0]) and is_rel(vals[1])):
                return None
            return _compose(vals[0], vals[1])
        if kind == "id":
            return setv(PairV(x, x) for x in vals[0].members)
        if kind == "inv":
            if not is_rel(vals[0]):
                return None
            return _converse(vals[0])
        if kind == "dom":
            if not is_rel(vals[0]):
                return None
            return _dom(vals[0])
        if kind == "ran":
            if not is_rel(vals[0]):
                return None
            return _ran(vals[0])
        if kind == "dres":
            if not is_rel(vals[1]):
                return None
            return setv(p for p in vals[1].members if p.first in vals[0].members)
        if kind == "rres":
            if not is_rel(vals[0]):
                return None
            return setv(p for p in vals[0].members if p.second in vals[1].members)
        if kind == "dares":
            if not is_rel(vals[1]):
                return None
            return setv(p for p in vals[1].members if p.first not in vals[0].members)
        if kind == "rares":
            if not is_rel(vals[0]):
                return None
            return setv(p for p in vals[0].members if p.second not in vals[1].members)
        if kind == "rimg":
            if not is_rel(vals[0]):
                return None
            return setv(
                p.second for p in vals[0].members if p.first in vals[1].members
            )
        if kind == "oplus":
            if not (is_rel(vals[0]) and is_rel(vals[1])):
                return None
            dom_s = _dom(vals[1])
            kept = {p for p in vals[0].members if p.first not in dom_s.members}
            return SetV(frozenset(kept) | vals[1].members)
    except AttributeError:
        return None
    return None


class _StopSearch(Exception):
    pass


class _Search:
    def __init__(self, conj: Conj, o_values, set_values, var_sorts, budget,
                 first_only: bool = False):
        self.conj = conj
        self.o_values = o_values
        self.set_values = set_values
        self.var_sorts = var_sorts
        self.budget = budget
        self.first_only = first_only
        self.nodes = 0
        self.models: list = []

    def _ground_args(self, con, asg):
        vals = []
        for t in con.args:
            try:
                vals.append(eval_term(t, asg))
            except UnboundVariable:
                vals.append(None)
        return vals

    def run(self):
        order = list(self.var_sorts)
        try:
            self.dfs(dict(), order)
        except _StopSearch:
            pass
        return self.models

    def dfs(self, asg, remaining):
        self.nodes += 1
        if self.nodes > self.budget.max_nodes:
            raise BudgetTooLarge(
                f"model search exceeded {self.budget.max_nodes} nodes"
            )
        # Propagate determined slots and reject violated constraints.
        asg = dict(asg)
        remaining = list(remaining)
        changed = True
        while changed:
            changed = False
            for con in self.conj:
                unbound = [v for v in free_vars(con) if v not in asg]
                if not unbound:
                    if not eval_constraint(con, asg):
                        return
                    continue
                slot = _DETERMINED_SLOT.get(con.kind)
                if slot is not None:
                    target = con.args[slot]
                    if (
                        isinstance(target, Var)
                        and target.name in unbound
                        and len(unbound) == 1
                    ):
                        vals = self._ground_args(con, asg)
                        others = [v for i, v in enumerate(vals) if i != slot]
                        if all(v is not None for v in others):
                            forced = _determine(con.kind, vals, slot)
                            if forced is None:
                                return
                            if isinstance(forced, SetV) != (
                                self.var_sorts[target.name] is Sort.SET
                            ):
                                return
                            asg[target.name] = forced
                            remaining.remove(target.name)
                            changed = True
                if con.kind == "eq":
                    a0, a1 = con.args
                    for var_side, other in ((a0, a1), (a1, a0)):
                        if (
                            isinstance(var_side, Var)
                            and var_side.name not in asg
                            and not [v for v in free_vars(other) if v not in asg]
                        ):
                            val = eval_term(other, asg)
                            if isinstance(val, SetV) != (
                                self.var_sorts[var_side.name] is Sort.SET
                            ):
                                return
                            asg[var_side.name] = val
                            remaining.remove(var_side.name)
                            changed = True
                            break
        if not remaining:
            self.models.append(dict(asg))
            if self.first_only:
                raise _StopSearch()
            return
        name = remaining[0]
        rest = remaining[1:]
        pool = (
            self.set_values if self.var_sorts[name] is Sort.SET else self.o_values
        )
        for v in pool:
            asg[name] = v
            self.dfs(asg, rest)
        del asg[name]


def enumerate_models(
    f: Formula, budget: Optional[UniverseBudget] = None
) -> list:
    """All satisfying assignments within the budgeted universe.

    Models are returned deduplicated, in the deterministic order induced
    by the canonical value ordering.
    """
    budget = budget or UniverseBudget()
    consts: set = set()
    _constants_of(f, consts)
    o_values, set_values = build_universe(budget, tuple(sorted(consts)))
    vars_ = free_vars(f)
    n_set = sum(1 for s in vars_.values() if s is Sort.SET)
    n_o = len(vars_) - n_set
    space = (len(set_values) ** n_set) * (len(o_values) ** n_o)
    if space > budget.max_space:
        raise BudgetTooLarge(f"assignment space of {space} exceeds the cap")
    all_models: dict = {}
    for conj in dnf(f) if not isinstance(f, tuple) else [f]:
        search = _Search(conj, o_values, set_values, dict(vars_), budget)
        for m in search.run():
            key = tuple(sorted((name, value_key(v)) for name, v in m.items()))
            all_models.setdefault(key, m)
    return [all_models[k] for k in sorted(all_models)]


def satisfiable_within(f: Formula, budget: Optional[UniverseBudget] = None) -> bool:
    """True when at least one model exists within the budget (short-circuits)."""
    budget = budget or UniverseBudget()
    consts: set = set()
    _constants_of(f, consts)
    o_values, set_values = build_universe(budget, tuple(sorted(consts)))
    vars_ = free_vars(f)
    for conj in dnf(f) if not isinstance(f, tuple) else [f]:
        search = _Search(conj, o_values, set_values, dict(vars_), budget,
                         first_only=True)
        if search.run():
            return True
    return False
