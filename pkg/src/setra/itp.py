"""Interactive prover layer: theorem store, goal stack, proof commands.

A goal is a sequent Gamma |- Delta; proving refutes Gamma and the
negated thesis with the solver.  Commands mirror standard inference
rules: assume (cut), cases (conjunction introduction), drop (weakening),
define (naming an expression), rewrite (thesis characterization) and
prove (call the solver).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .derived import pfun_characterization
from .errors import (
    ArgOutOfScope,
    DuplicateTheorem,
    HypothesisNotFound,
    LastArgNotFresh,
    NegationUnavailable,
    NoCharacterization,
    NoCounterexample,
    NotAConjunction,
    NotDefinable,
    ScriptError,
    SetraError,
    ThesisNotAtomic,
)
from .parser import ScriptCommand, TheoremDecl, pretty
from .solve import (
    Budget,
    Counterexample,
    Proved,
    ProveUnknown,
    prove_valid,
)
from .terms import (
    Conj,
    Constraint,
    ExtSet,
    KINDS,
    Pair,
    Sort,
    Var,
    VarGen,
    free_vars,
    negate_constraint,
)


@dataclass
class Goal:
    gamma: Conj  # hypotheses
    delta: Conj  # thesis
    scope: dict  # variable name -> Sort

    def display(self, index: int, total: int) -> str:
        lines = [f"Goal {index} of {total}"]
        for i, h in enumerate(self.gamma, start=1):
            lines.append(f"  H{i}. {pretty(h)}")
        lines.append(f"  |- {pretty(self.delta)}")
        return "\n".join(lines)


@dataclass
class ProofState:
    theorem: TheoremDecl
    goals: list  # stack; goals[0] is the current goal
    log: list = field(default_factory=list)
    status: str = "InProgress"  # InProgress | Qed | Failed
    counterexample: Optional[dict] = None
    last_message: str = ""
    gen: VarGen = field(default_factory=lambda: VarGen(prefix="_N"))

    @property
    def current(self) -> Goal:
        if not self.goals:
            raise SetraError("no open goals")
        return self.goals[0]

    def display(self) -> str:
        if not self.goals:
            return f"theorem {self.theorem.name}: Qed"
        return self.current.display(1, len(self.goals))


def _scope_of(*conjs) -> dict:
    out: dict = {}
    for c in conjs:
        out.update(free_vars(c))
    return out


def declare(decl: TheoremDecl, store: Optional[dict] = None) -> ProofState:
    """Open a proof for a theorem; one goal hypotheses |- thesis."""
    if store is not None and decl.name in store:
        raise DuplicateTheorem(decl.name)
    for c in decl.thesis:
        if KINDS[c.kind].negation is None:
            raise NegationUnavailable(
                f"thesis constraint {pretty(c)} has no negated form"
            )
    if store is not None:
        store[decl.name] = decl
    goal = Goal(decl.hypotheses, decl.thesis, _scope_of(decl.hypotheses, decl.thesis))
    return ProofState(decl, [goal])


def _replace_current(st: ProofState, new_goals: list) -> None:
    st.goals = new_goals + st.goals[1:]


def cmd_assume(st: ProofState, phi: Conj) -> ProofState:
    """Cut: prove Delta under phi, then prove phi."""
    goal = st.current
    for name in free_vars(phi):
        if name not in goal.scope:
            raise ArgOutOfScope(f"variable {name} is not in scope")
    with_phi = Goal(goal.gamma + tuple(phi), goal.delta, dict(goal.scope))
    justify = Goal(goal.gamma, tuple(phi), dict(goal.scope))
    _replace_current(st, [with_phi, justify])
    st.log.append(("assume", phi))
    st.counterexample = None
    return st


def cmd_cases(st: ProofState) -> ProofState:
    """Conjunction introduction: split the thesis first-vs-rest."""
    goal = st.current
    if len(goal.delta) < 2:
        raise NotAConjunction("the thesis is not a conjunction of two or more parts")
    first = Goal(goal.gamma, goal.delta[:1], dict(goal.scope))
    rest = Goal(goal.gamma, goal.delta[1:], dict(goal.scope))
    _replace_current(st, [first, rest])
    st.log.append(("cases", None))
    st.counterexample = None
    return st


def cmd_drop(st: ProofState, constraints) -> ProofState:
    """Weakening: remove the listed hypotheses from the current goal."""
    goal = st.current
    gamma = list(goal.gamma)
    for c in constraints:
        if c not in gamma:
            raise HypothesisNotFound(pretty(c))
        gamma.remove(c)
    _replace_current(st, [Goal(tuple(gamma), goal.delta, dict(goal.scope))])
    st.log.append(("drop", tuple(constraints)))
    st.counterexample = None
    return st


DEFINABLE = ("un", "inv", "id", "comp")


def cmd_define(st: ProofState, pi: Constraint) -> ProofState:
    """Name an expression: add pi to Gamma, binding its fresh last argument."""
    goal = st.current
    if pi.kind not in DEFINABLE:
        raise NotDefinable(f"define expects one of {', '.join(DEFINABLE)}")
    *others, last = pi.args
    if not isinstance(last, Var) or last.name in goal.scope:
        raise LastArgNotFresh("the last argument must be a new variable")
    for t in others:
        for name in free_vars(t):
            if name not in goal.scope:
                raise ArgOutOfScope(f"variable {name} is not in scope")
    new_scope = dict(goal.scope)
    new_scope[last.name] = last.sort
    _replace_current(st, [Goal(goal.gamma + (pi,), goal.delta, new_scope)])
    st.log.append(("define", pi))
    st.counterexample = None
    return st


def cmd_prove(st: ProofState, budget: Optional[Budget] = None, cancel=None) -> ProofState:
    """Call the solver on the current sequent.

    Proved pops the goal (Qed when none are left); a counterexample or a
    budget interruption leaves the goal unchanged.
    """
    goal = st.current
    budget = budget or Budget()
    out = prove_valid(goal.gamma, goal.delta, budget, cancel=cancel)
    st.log.append(("prove", None))
    if isinstance(out, Proved):
        st.goals = st.goals[1:]
        st.counterexample = None
        st.last_message = "subgoal proved"
        if not st.goals:
            st.status = "Qed"
            st.last_message = "Qed"
    elif isinstance(out, Counterexample):
        st.counterexample = out.assignment
        st.last_message = "counterexample found; goal unchanged"
    else:
        st.counterexample = None
        st.last_message = f"interrupted ({out.reason}); goal unchanged"
    return st


def cmd_counterex(st: ProofState) -> dict:
    """The assignment witnessing the last failed prove."""
    if st.counterexample is None:
        raise NoCounterexample("no counterexample is available")
    return st.counterexample


# ---------------------------------------------------------------------------
# rewrite: thesis characterizations


def _subset_split(goal: Goal, con: Constraint, gen: VarGen):
    a, b = con.args
    x = gen.fresh(Sort.O)
    n = gen.fresh(Sort.SET)
    hyp = Constraint("eq", (a, ExtSet(x, n)))
    return [(goal.gamma + (hyp,), (Constraint("in", (x, b)),))]


def _eq_split(goal: Goal, con: Constraint, gen: VarGen):
    a, b = con.args
    from .terms import term_sort

    if term_sort(a) is not Sort.SET:
        raise NoCharacterization("equality rewrite applies to set equalities")
    return [
        (goal.gamma, (Constraint("subset", (a, b)),)),
        (goal.gamma, (Constraint("subset", (b, a)),)),
    ]


def _pfun_split(goal: Goal, con: Constraint, gen: VarGen):
    (f_term,) = con.args
    return [
        (goal.gamma + extra, thesis)
        for extra, thesis in pfun_characterization(f_term, gen)
    ]


def _un_split(goal: Goal, con: Constraint, gen: VarGen):
    a, b, r = con.args
    x = gen.fresh(Sort.O)
    n = gen.fresh(Sort.SET)
    m = gen.fresh(Sort.SET)
    return [
        (goal.gamma, (Constraint("subset", (a, r)),)),
        (goal.gamma, (Constraint("subset", (b, r)),)),
        (
            goal.gamma
            + (Constraint("eq", (r, ExtSet(x, n))), Constraint("un", (a, b, m))),
            (Constraint("in", (x, m)),),
        ),
    ]


def _inters_split(goal: Goal, con: Constraint, gen: VarGen):
    a, b, r = con.args
    x = gen.fresh(Sort.O)
    n1 = gen.fresh(Sort.SET)
    n2 = gen.fresh(Sort.SET)
    return [
        (goal.gamma, (Constraint("subset", (r, a)),)),
        (goal.gamma, (Constraint("subset", (r, b)),)),
        (
            goal.gamma
            + (
                Constraint("eq", (a, ExtSet(x, n1))),
                Constraint("eq", (b, ExtSet(x, n2))),
            ),
            (Constraint("in", (x, r)),),
        ),
    ]


def _dom_split(goal: Goal, con: Constraint, gen: VarGen):
    r, d = con.args
    x = gen.fresh(Sort.O)
    y = gen.fresh(Sort.O)
    n = gen.fresh(Sort.SET)
    n2 = gen.fresh(Sort.SET)
    m = gen.fresh(Sort.SET)
    return [
        (
            goal.gamma + (Constraint("eq", (r, ExtSet(Pair(x, y), n))),),
            (Constraint("in", (x, d)),),
        ),
        (
            goal.gamma
            + (Constraint("eq", (d, ExtSet(x, n2))), Constraint("dom", (r, m))),
            (Constraint("in", (x, m)),),
        ),
    ]


def _ran_split(goal: Goal, con: Constraint, gen: VarGen):
    r, e = con.args
    x = gen.fresh(Sort.O)
    y = gen.fresh(Sort.O)
    n = gen.fresh(Sort.SET)
    n2 = gen.fresh(Sort.SET)
    m = gen.fresh(Sort.SET)
    return [
        (
            goal.gamma + (Constraint("eq", (r, ExtSet(Pair(x, y), n))),),
            (Constraint("in", (y, e)),),
        ),
        (
            goal.gamma
            + (Constraint("eq", (e, ExtSet(y, n2))), Constraint("ran", (r, m))),
            (Constraint("in", (y, m)),),
        ),
    ]


CHARACTERIZATIONS = {
    "eq": _eq_split,
    "subset": _subset_split,
    "pfun": _pfun_split,
    "un": _un_split,
    "inters": _inters_split,
    "dom": _dom_split,
    "ran": _ran_split,
}


def cmd_rewrite(st: ProofState) -> ProofState:
    """Split the thesis per its registered characterization."""
    goal = st.current
    if len(goal.delta) != 1:
        raise ThesisNotAtomic("rewrite expects a single-constraint thesis")
    con = goal.delta[0]
    split = CHARACTERIZATIONS.get(con.kind)
    if split is None:
        raise NoCharacterization(f"no characterization for kind {con.kind}")
    pieces = split(goal, con, st.gen)
    new_goals = []
    for gamma, delta in pieces:
        scope = dict(goal.scope)
        for part in (gamma, delta):
            scope.update(free_vars(part))
        new_goals.append(Goal(tuple(gamma), tuple(delta), scope))
    _replace_current(st, new_goals)
    st.log.append(("rewrite", None))
    st.counterexample = None
    return st


# ---------------------------------------------------------------------------
# Scripts


def run_script(
    decl: TheoremDecl,
    commands,
    budget: Optional[Budget] = None,
    cancel=None,
    store: Optional[dict] = None,
) -> ProofState:
    """Apply script commands in order to the successive current goals."""
    st = declare(decl, store)
    for i, cmd in enumerate(commands):
        try:
            if cmd.op == "rewrite":
                cmd_rewrite(st)
            elif cmd.op == "drop":
                cmd_drop(st, cmd.payload)
            elif cmd.op == "prove":
                cmd_prove(st, budget, cancel=cancel)
            elif cmd.op == "assume":
                cmd_assume(st, cmd.payload)
            elif cmd.op == "cases":
                cmd_cases(st)
            elif cmd.op == "define":
                cmd_define(st, cmd.payload)
            elif cmd.op == "counterex":
                cmd_counterex(st)
            else:
                raise SetraError(f"unknown command {cmd.op}")
        except SetraError as e:
            raise ScriptError(i, e) from e
    return st
