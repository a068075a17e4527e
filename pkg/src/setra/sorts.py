"""Sort inference: attach set/rel constraints to variables.

Variables are not declared in the surface language, so the solver front
end inspects every position a variable occurs in and conjoins ``set(X)``
or ``rel(X)`` accordingly.  A variable needed both as a plain object and
as a set is reported as a conflict.
"""

from __future__ import annotations

from .errors import SortConflict
from .terms import (
    ANY_ARG,
    And,
    CartProd,
    Constraint,
    ExtSet,
    Formula,
    KINDS,
    Or,
    Pair,
    REL_ARG,
    SET_ARG,
    Sort,
    Term,
    UrFunctor,
    Var,
)

MUST_SET = "MustSet"
MUST_REL = "MustRel"
MUST_O = "MustO"

SortEnv = dict  # variable name -> MUST_SET | MUST_REL | MUST_O


def _require(env: SortEnv, name: str, req: str) -> None:
    cur = env.get(name)
    if cur is None:
        env[name] = req
        return
    if cur == req:
        return
    if {cur, req} == {MUST_SET, MUST_REL}:
        env[name] = MUST_REL  # relations are sets of pairs
        return
    raise SortConflict(
        f"variable {name} is required to be both a set and a non-set object"
    )


def _walk_term(t: Term, env: SortEnv, requirement=None) -> None:
    if isinstance(t, Var):
        if requirement is not None:
            _require(env, t.name, requirement)
        return
    if isinstance(t, UrFunctor):
        for a in t.args:
            _walk_term(a, env, MUST_O)
        return
    if isinstance(t, ExtSet):
        _walk_term(t.elem, env, None)
        _walk_term(t.rest, env, MUST_SET)
        return
    if isinstance(t, CartProd):
        _walk_term(t.left, env, MUST_SET)
        _walk_term(t.right, env, MUST_SET)
        return
    if isinstance(t, Pair):
        _walk_term(t.first, env, None)
        _walk_term(t.second, env, None)


def _walk_formula(f: Formula, env: SortEnv) -> None:
    if isinstance(f, Constraint):
        info = KINDS[f.kind]
        for req, arg in zip(info.args, f.args):
            if req == REL_ARG:
                _walk_term(arg, env, MUST_REL)
            elif req == SET_ARG:
                _walk_term(arg, env, MUST_SET)
            else:
                _walk_term(arg, env, None)
    elif isinstance(f, (And, Or)):
        for p in f.parts:
            _walk_formula(p, env)


def infer_env(f: Formula) -> SortEnv:
    env: SortEnv = {}
    _walk_formula(f, env)
    return env


def _existing_annotations(f: Formula) -> set:
    out = set()
    if isinstance(f, Constraint):
        if f.kind in ("set", "rel") and isinstance(f.args[0], Var):
            out.add((f.kind, f.args[0].name))
    elif isinstance(f, (And, Or)):
        for p in f.parts:
            out |= _existing_annotations(p)
    return out


def sort_infer(f: Formula) -> Formula:
    """Conjoin set/rel annotations for every variable that needs one.

    Idempotent: annotations already present are not added twice.  A
    ``rel(X)`` subsumes ``set(X)``.
    """
    env = infer_env(f)
    present = _existing_annotations(f)
    added = []
    for name, req in env.items():
        if req == MUST_REL:
            if ("rel", name) not in present:
                added.append(Constraint("rel", (Var(name, Sort.SET),)))
        elif req == MUST_SET:
            if ("rel", name) in present or ("set", name) in present:
                continue
            added.append(Constraint("set", (Var(name, Sort.SET),)))
    if not added:
        return f
    if isinstance(f, And):
        return And(f.parts + tuple(added), f.span)
    return And((f, *added))
