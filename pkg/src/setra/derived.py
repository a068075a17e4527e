"""Rewrite rules for the derived set and relational operators.

Each derived constraint kind rewrites to its set-theoretic definition:
intersection and difference get Dovier-style recursive rules, the
relational operators unfold through id/comp/inv/dom, and ``apply``
expands to functionality plus membership.  Every rule here is validated
against the ground evaluator by the property suite.
"""

from __future__ import annotations

from .terms import (
    CartProd,
    Constraint,
    EMPTY,
    EmptySet,
    ExtSet,
    Pair,
    Sort,
    Term,
    Var,
    VarGen,
)
from .rewrite import (
    ELEM_SORTS,
    FALSE,
    Rewritten,
    _c,
    eq,
    fresh_elems,
    match_pair,
    rule,
    true_outcome,
)


# ---------------------------------------------------------------------------
# Intersection: inters(A, B, C) means C = A intersect B


@rule("inters", "inters_empty", "inters with an empty side", "1")
def inters_empty(con, g):
    a, b, r = con.args
    if isinstance(a, EmptySet) or isinstance(b, EmptySet):
        return Rewritten([[eq(r, EMPTY)]])
    return None


@rule("inters", "inters_self", "inters(A,A,C)", "1")
def inters_self(con, g):
    a, b, r = con.args
    if a == b:
        return Rewritten([[eq(r, a)]])
    return None


@rule("inters", "inters_self_result", "inters(A,B,A): subset form", "1")
def inters_self_result(con, g):
    a, b, r = con.args
    if r == a:
        return Rewritten([[_c("un", a, b, b)]])  # A subset of B
    if r == b:
        return Rewritten([[_c("un", b, a, a)]])  # B subset of A
    return None


@rule("inters", "inters_result_ext", "inters(A,B,{t|C'})", "1")
def inters_result_ext(con, g):
    a, b, r = con.args
    if not isinstance(r, ExtSet):
        return None
    t = r.elem
    n1, n2, n3 = g.fresh(Sort.SET), g.fresh(Sort.SET), g.fresh(Sort.SET)
    return Rewritten(
        [
            [
                eq(r, ExtSet(t, n3)),
                _c("nin", t, n3),
                eq(a, ExtSet(t, n1)),
                _c("nin", t, n1),
                eq(b, ExtSet(t, n2)),
                _c("nin", t, n2),
                _c("inters", n1, n2, n3),
            ]
        ]
    )


@rule("inters", "inters_arg_ext", "inters({t|A'},B,C) or symmetric", "2")
def inters_arg_ext(con, g):
    a, b, r = con.args
    if isinstance(a, ExtSet):
        t, other, swapped = a.elem, b, False
        ext_side = a
    elif isinstance(b, ExtSet):
        t, other, swapped = b.elem, a, True
        ext_side = b
    else:
        return None
    n1, n2, n3 = g.fresh(Sort.SET), g.fresh(Sort.SET), g.fresh(Sort.SET)
    common = [eq(ext_side, ExtSet(t, n1)), _c("nin", t, n1)]
    rec1 = ("inters", n1, n2, n3) if not swapped else ("inters", n2, n1, n3)
    rec2 = ("inters", n1, other, r) if not swapped else ("inters", other, n1, r)
    return Rewritten(
        [
            common
            + [
                eq(other, ExtSet(t, n2)),
                _c("nin", t, n2),
                eq(r, ExtSet(t, n3)),
                _c("nin", t, n3),
                _c(*rec1),
            ],
            common + [_c("nin", t, other), _c(*rec2)],
        ]
    )


@rule("ninters", "ninters_witness", "ninters(A,B,C)", "6")
def ninters_witness(con, g):
    a, b, r = con.args
    branches = []
    for n in fresh_elems(g):
        branches.append([_c("in", n, r), _c("nin", n, a)])
        branches.append([_c("in", n, r), _c("nin", n, b)])
        branches.append([_c("in", n, a), _c("in", n, b), _c("nin", n, r)])
    return Rewritten(branches)


# ---------------------------------------------------------------------------
# Difference: diff(A, B, C) means C = A minus B


@rule("diff", "diff_left_empty", "diff({},B,C)", "1")
def diff_left_empty(con, g):
    a, b, r = con.args
    if isinstance(a, EmptySet):
        return Rewritten([[eq(r, EMPTY)]])
    return None


@rule("diff", "diff_right_empty", "diff(A,{},C)", "1")
def diff_right_empty(con, g):
    a, b, r = con.args
    if isinstance(b, EmptySet):
        return Rewritten([[eq(r, a)]])
    return None


@rule("diff", "diff_self", "diff(A,A,C)", "1")
def diff_self(con, g):
    a, b, r = con.args
    if a == b:
        return Rewritten([[eq(r, EMPTY)]])
    return None


@rule("diff", "diff_self_result", "diff(A,B,A) / diff(A,B,B)", "1")
def diff_self_result(con, g):
    a, b, r = con.args
    if r == a:
        return Rewritten([[_c("disj", a, b)]])  # A minus B = A iff disjoint
    if r == b:
        # A minus B = B forces B empty, then A empty as well.
        return Rewritten([[eq(a, EMPTY), eq(b, EMPTY)]])
    return None


@rule("diff", "diff_result_ext", "diff(A,B,{t|C'})", "1")
def diff_result_ext(con, g):
    a, b, r = con.args
    if not isinstance(r, ExtSet):
        return None
    t = r.elem
    n1, n3 = g.fresh(Sort.SET), g.fresh(Sort.SET)
    return Rewritten(
        [
            [
                eq(r, ExtSet(t, n3)),
                _c("nin", t, n3),
                eq(a, ExtSet(t, n1)),
                _c("nin", t, n1),
                _c("nin", t, b),
                _c("diff", n1, b, n3),
            ]
        ]
    )


@rule("diff", "diff_first_ext", "diff({t|A'},B,C)", "2")
def diff_first_ext(con, g):
    a, b, r = con.args
    if not isinstance(a, ExtSet):
        return None
    t = a.elem
    n1, n2, n3 = g.fresh(Sort.SET), g.fresh(Sort.SET), g.fresh(Sort.SET)
    common = [eq(a, ExtSet(t, n1)), _c("nin", t, n1)]
    return Rewritten(
        [
            common
            + [
                _c("nin", t, b),
                eq(r, ExtSet(t, n3)),
                _c("nin", t, n3),
                _c("diff", n1, b, n3),
            ],
            common
            + [eq(b, ExtSet(t, n2)), _c("nin", t, n2), _c("diff", n1, n2, r)],
        ]
    )


@rule("diff", "diff_second_ext", "diff(A,{t|B'},C)", "2")
def diff_second_ext(con, g):
    a, b, r = con.args
    if not isinstance(b, ExtSet):
        return None
    t = b.elem
    n1, n2 = g.fresh(Sort.SET), g.fresh(Sort.SET)
    common = [eq(b, ExtSet(t, n2)), _c("nin", t, n2)]
    return Rewritten(
        [
            common
            + [eq(a, ExtSet(t, n1)), _c("nin", t, n1), _c("diff", n1, n2, r)],
            common + [_c("nin", t, a), _c("diff", a, n2, r)],
        ]
    )


@rule("ndiff", "ndiff_witness", "ndiff(A,B,C)", "6")
def ndiff_witness(con, g):
    a, b, r = con.args
    branches = []
    for n in fresh_elems(g):
        branches.append([_c("in", n, r), _c("nin", n, a)])
        branches.append([_c("in", n, r), _c("in", n, b)])
        branches.append(
            [_c("in", n, a), _c("nin", n, b), _c("nin", n, r)]
        )
    return Rewritten(branches)


# ---------------------------------------------------------------------------
# Subset


@rule("subset", "subset_as_union", "subset(A,B) -> un(A,B,B)", "1")
def subset_as_union(con, g):
    a, b = con.args
    return Rewritten([[_c("un", a, b, b)]])


@rule("nsubset", "nsubset_witness", "nsubset(A,B)", "2")
def nsubset_witness(con, g):
    a, b = con.args
    return Rewritten([[_c("in", n, a), _c("nin", n, b)] for n in fresh_elems(g)])


# ---------------------------------------------------------------------------
# Domain and range


@rule("dom", "dom_self", "dom(R,R)", "1")
def dom_self(con, g):
    r, d = con.args
    if r == d:
        return Rewritten([[eq(r, EMPTY)]])  # members would be ill-founded
    return None


@rule("dom", "dom_empty_rel", "dom({},D)", "1")
def dom_empty_rel(con, g):
    r, d = con.args
    if isinstance(r, EmptySet):
        return Rewritten([[eq(d, EMPTY)]])
    return None


@rule("dom", "dom_empty_dom", "dom(R,{})", "1")
def dom_empty_dom(con, g):
    r, d = con.args
    if isinstance(d, EmptySet):
        return Rewritten([[eq(r, EMPTY)]])
    return None


@rule("dom", "dom_rel_ext", "dom({p|R'},D)", "1 per pair reading")
def dom_rel_ext(con, g):
    r, d = con.args
    if not isinstance(r, ExtSet):
        return None
    alts = match_pair(r.elem, g)
    if not alts:
        return FALSE
    branches = []
    for first, second, prefix in alts:
        n = g.fresh(Sort.SET)
        branches.append(
            prefix + [eq(d, ExtSet(first, n)), _c("dom", r.rest, n)]
        )
    return Rewritten(branches)


@rule("dom", "dom_dom_ext", "dom(R,{t|D'}): split off the t-section of R", "2")
def dom_dom_ext(con, g):
    # R splits uniquely into its t-section {t} x Y (Y nonempty) and a
    # t-free remainder NR; recursing on NR keeps t out of the subproblem
    # for good, so domain elements are never reprocessed.
    r, d = con.args
    if not isinstance(d, ExtSet):
        return None
    t = d.elem
    branches = []
    for s2 in ELEM_SORTS:
        n2 = g.fresh(s2)
        ny, ny2 = g.fresh(Sort.SET), g.fresh(Sort.SET)
        nr, n4 = g.fresh(Sort.SET), g.fresh(Sort.SET)
        branches.append(
            [
                eq(ny, ExtSet(n2, ny2)),
                _c("un", CartProd(ExtSet(t, EMPTY), ny), nr, r),
                _c("dom", nr, n4),
                _c("nin", t, n4),
                eq(d, ExtSet(t, n4)),
            ]
        )
    return Rewritten(branches)


@rule("dom", "dom_cp", "dom(cp(A,B),D)", "2")
def dom_cp(con, g):
    r, d = con.args
    if not isinstance(r, CartProd):
        return None
    return Rewritten(
        [
            [eq(r.right, EMPTY), eq(d, EMPTY)],
            [_c("neq", r.right, EMPTY), eq(d, r.left)],
        ]
    )


@rule("ndom", "ndom_flip", "ndom(R,D)", "2")
def ndom_flip(con, g):
    r, d = con.args
    n = g.fresh(Sort.SET)
    return Rewritten([[_c("nrel", r)], [_c("dom", r, n), _c("neq", n, d)]])


@rule("ran", "ran_via_inv", "ran(R,E) -> inv(R,N) & dom(N,E)", "1")
def ran_via_inv(con, g):
    r, e = con.args
    n = g.fresh(Sort.SET)
    return Rewritten([[_c("inv", r, n), _c("dom", n, e)]])


@rule("nran", "nran_flip", "nran(R,E)", "2")
def nran_flip(con, g):
    r, e = con.args
    n = g.fresh(Sort.SET)
    return Rewritten([[_c("nrel", r)], [_c("ran", r, n), _c("neq", n, e)]])


# ---------------------------------------------------------------------------
# Restrictions, image, override


@rule("dres", "dres_via_id_comp", "dres(A,R,S) -> id(A,N) & comp(N,R,S)", "1")
def dres_via_id_comp(con, g):
    a, r, s = con.args
    n = g.fresh(Sort.SET)
    return Rewritten([[_c("id", a, n), _c("comp", n, r, s)]])


@rule("rres", "rres_via_id_comp", "rres(R,A,S) -> id(A,N) & comp(R,N,S)", "1")
def rres_via_id_comp(con, g):
    r, a, s = con.args
    n = g.fresh(Sort.SET)
    return Rewritten([[_c("id", a, n), _c("comp", r, n, s)]])


@rule("dares", "dares_via_diff", "dares(A,R,S) -> dres(A,R,N) & diff(R,N,S)", "1")
def dares_via_diff(con, g):
    a, r, s = con.args
    n = g.fresh(Sort.SET)
    return Rewritten([[_c("dres", a, r, n), _c("diff", r, n, s)]])


@rule("rares", "rares_via_diff", "rares(R,A,S) -> rres(R,A,N) & diff(R,N,S)", "1")
def rares_via_diff(con, g):
    r, a, s = con.args
    n = g.fresh(Sort.SET)
    return Rewritten([[_c("rres", r, a, n), _c("diff", r, n, s)]])


@rule("rimg", "rimg_via_dres_ran", "rimg(R,A,B) -> dres(A,R,N) & ran(N,B)", "1")
def rimg_via_dres_ran(con, g):
    r, a, b = con.args
    n = g.fresh(Sort.SET)
    return Rewritten([[_c("dres", a, r, n), _c("ran", n, b)]])


@rule("nrimg", "nrimg_flip", "nrimg(R,A,B)", "2")
def nrimg_flip(con, g):
    r, a, b = con.args
    n = g.fresh(Sort.SET)
    return Rewritten([[_c("nrel", r)], [_c("rimg", r, a, n), _c("neq", n, b)]])


@rule("oplus", "oplus_unfold", "oplus(R,S,T) -> dom/dares/un", "1")
def oplus_unfold(con, g):
    r, s, t = con.args
    n1, n2 = g.fresh(Sort.SET), g.fresh(Sort.SET)
    return Rewritten(
        [[_c("dom", s, n1), _c("dares", n1, r, n2), _c("un", n2, s, t)]]
    )


@rule("noplus", "noplus_flip", "noplus(R,S,T)", "3")
def noplus_flip(con, g):
    r, s, t = con.args
    n = g.fresh(Sort.SET)
    return Rewritten(
        [
            [_c("nrel", r)],
            [_c("nrel", s)],
            [_c("oplus", r, s, n), _c("neq", n, t)],
        ]
    )


# ---------------------------------------------------------------------------
# Partial functions


@rule("pfun", "pfun_empty", "pfun({})", "true")
def pfun_empty(con, g):
    if isinstance(con.args[0], EmptySet):
        return true_outcome()
    return None


@rule("pfun", "pfun_ext", "pfun({p|F'})", "1 per pair reading")
def pfun_ext(con, g):
    (f,) = con.args
    if not isinstance(f, ExtSet):
        return None
    alts = match_pair(f.elem, g)
    if not alts:
        return FALSE
    branches = []
    for first, second, prefix in alts:
        n3, n4 = g.fresh(Sort.SET), g.fresh(Sort.SET)
        p = Pair(first, second)
        branches.append(
            prefix
            + [
                eq(f, ExtSet(p, n3)),
                _c("nin", p, n3),
                _c("pfun", n3),
                _c("dom", n3, n4),
                _c("nin", first, n4),
            ]
        )
    return Rewritten(branches)


@rule("pfun", "pfun_cp", "pfun(cp(A,B))", "4")
def pfun_cp(con, g):
    (f,) = con.args
    if not isinstance(f, CartProd):
        return None
    branches = [[eq(f.left, EMPTY)], [eq(f.right, EMPTY)]]
    for n in fresh_elems(g):
        branches.append([eq(f.right, ExtSet(n, EMPTY))])
    return Rewritten(branches)


@rule("npfun", "npfun_witness", "npfun(F)", "9")
def npfun_witness(con, g):
    (f,) = con.args
    branches = [[_c("nrel", f)]]
    for s1 in ELEM_SORTS:
        for s2 in ELEM_SORTS:
            for s3 in ELEM_SORTS:
                n1, n2, n3 = g.fresh(s1), g.fresh(s2), g.fresh(s3)
                branches.append(
                    [
                        _c("in", Pair(n1, n2), f),
                        _c("in", Pair(n1, n3), f),
                        _c("neq", n2, n3),
                    ]
                )
    return Rewritten(branches)


@rule("apply", "apply_unfold", "apply(F,X,Y) -> pfun(F) & [X,Y] in F", "1")
def apply_unfold(con, g):
    f, x, y = con.args
    return Rewritten([[_c("pfun", f), _c("in", Pair(x, y), f)]])


@rule("napply", "napply_witness", "napply(F,X,Y)", "2")
def napply_witness(con, g):
    f, x, y = con.args
    return Rewritten([[_c("npfun", f)], [_c("nin", Pair(x, y), f)]])


# ---------------------------------------------------------------------------
# Characterizations for the interactive prover's rewrite command


def pfun_characterization(f_term: Term, g: VarGen):
    """The two-subgoal split for a thesis ``pfun(f)``.

    Returns [(extra hypotheses, new thesis)]: functionality first, then
    pair-shape of every member."""
    x = g.fresh(Sort.O)
    y = g.fresh(Sort.O)
    z = g.fresh(Sort.O)
    v = g.fresh(Sort.O)
    n1 = g.fresh(Sort.SET)
    n2 = g.fresh(Sort.SET)
    goal1 = (
        (eq(f_term, ExtSet(Pair(x, y), ExtSet(Pair(x, z), n1))),),
        (_c("eq", y, z),),
    )
    goal2 = ((eq(f_term, ExtSet(v, n2)),), (_c("pair", v),))
    return [goal1, goal2]
