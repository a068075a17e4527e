"""Concrete ASCII syntax: parsing and pretty-printing.

Grammar summary (``%`` starts a line comment, files use UTF-8):

* variables are uppercase identifiers, ur-constants are lowercase
  identifiers or integers, ``f(t1,...,tn)`` is an uninterpreted functor;
* ``{}`` is the empty set, ``{t1,...,tn}`` and ``{t1,...,tn / A}`` are
  extensional sets, ``[x,y]`` an ordered pair, ``cp(A,B)`` a cartesian
  product;
* infix constraints: ``in nin = neq subset nsubset``; every other
  constraint is prefix, e.g. ``un(A,B,C)``;
* ``&`` is conjunction, ``or`` disjunction; ``&`` binds tighter than
  ``or``; parentheses group;
* ``theorem(Name, Hyps, Thesis).`` declares a theorem (``true`` is the
  empty conjunction) and is followed by proof-command lines such as
  ``rewrite.`` or ``drop([...]), prove.``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Union

from .errors import DanglingCommand, ParseError, SortError
from .terms import (
    ANY_ARG,
    And,
    CartProd,
    Constraint,
    EMPTY,
    EmptySet,
    ExtSet,
    Formula,
    KINDS,
    Or,
    Pair,
    REL_ARG,
    SET_ARG,
    Sort,
    SourceSpan,
    Term,
    TRUE,
    UrFunctor,
    Var,
    check_formula,
)

INFIX_KINDS = ("in", "nin", "=", "neq", "subset", "nsubset")

# Words that may not be used as ur-constants or functor names.
RESERVED_WORDS = frozenset(KINDS) | {"or", "true", "cp", "theorem"} | set(INFIX_KINDS)

COMMAND_WORDS = ("rewrite", "drop", "prove", "assume", "cases", "define", "counterex")


@dataclass(frozen=True)
class TheoremDecl:
    name: str
    hypotheses: tuple  # conjunction of Constraint
    thesis: tuple  # conjunction of Constraint
    span: Optional[SourceSpan] = dataclasses.field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ScriptCommand:
    op: str  # one of COMMAND_WORDS
    payload: object = None  # drop: tuple of Constraint; assume: tuple; define: Constraint
    span: Optional[SourceSpan] = dataclasses.field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Tokenizer


@dataclass(frozen=True)
class Token:
    kind: str  # "upper", "lower", "int", "punct", "eof"
    text: str
    span: SourceSpan


PUNCT = ("(", ")", "{", "}", "[", "]", ",", "/", "&", "=", ".")


def tokenize(text: str) -> list:
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        start, sline, scol = i, line, col
        if ch.isdigit():
            while i < n and text[i].isdigit():
                i += 1
            toks.append(Token("int", text[start:i], SourceSpan(start, i, sline, scol)))
            col += i - start
            continue
        if ch.isalpha() or ch == "_":
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            span = SourceSpan(start, i, sline, scol)
            if word[0] == "_":
                raise ParseError(
                    f"identifiers starting with '_' are reserved: {word!r}", span
                )
            kind = "upper" if word[0].isupper() else "lower"
            toks.append(Token(kind, word, span))
            col += i - start
            continue
        if ch in PUNCT:
            toks.append(Token("punct", ch, SourceSpan(i, i + 1, line, col)))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", SourceSpan(i, i + 1, line, col))
    toks.append(Token("eof", "", SourceSpan(n, n, line, col)))
    return toks


# ---------------------------------------------------------------------------
# Sort resolution
#
# Variables in the surface syntax are not declared.  Structural positions
# (set parts, product arguments, functor arguments, set-sorted constraint
# slots) fix a variable's sort; equalities and aligned pair/set components
# propagate sorts softly; anything still undetermined defaults to O.


class _SortSolver:
    def __init__(self):
        self.parent: dict = {}
        self.sort: dict = {}  # root -> Sort

    def _find(self, name: str) -> str:
        self.parent.setdefault(name, name)
        while self.parent[name] != name:
            self.parent[name] = self.parent[self.parent[name]]
            name = self.parent[name]
        return name

    def require(self, name: str, sort: Sort) -> None:
        root = self._find(name)
        cur = self.sort.get(root)
        if cur is None:
            self.sort[root] = sort
        # A hard conflict is left for sort inference to report: the
        # first requirement wins here, parsing stays lenient.

    def link(self, a: str, b: str) -> None:
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return
        sa, sb = self.sort.get(ra), self.sort.get(rb)
        if sa is not None and sb is not None and sa is not sb:
            return  # mixed-sort equality is legal (it is simply false)
        self.parent[ra] = rb
        if sb is None and sa is not None:
            self.sort[rb] = sa

    def resolve(self, name: str) -> Sort:
        return self.sort.get(self._find(name), Sort.O)


# ---------------------------------------------------------------------------
# Raw AST produced before sorts are known: variables are placeholders.


@dataclass(frozen=True)
class _RawVar:
    name: str
    span: SourceSpan


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.pos = 0

    # --- token helpers ---

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.span)
        return self.next()

    def at(self, text: str) -> bool:
        return self.peek().text == text

    # --- formulas ---

    def parse_formula(self):
        first = self.parse_conjunction()
        if not self.at("or"):
            return first
        parts = [first]
        while self.at("or"):
            self.next()
            parts.append(self.parse_conjunction())
        return ("or", tuple(parts))

    def parse_conjunction(self):
        parts = [self.parse_atom()]
        while self.at("&"):
            self.next()
            parts.append(self.parse_atom())
        if len(parts) == 1:
            return parts[0]
        return ("and", tuple(parts))

    def parse_atom(self):
        t = self.peek()
        if t.text == "(":
            self.next()
            f = self.parse_formula()
            self.expect(")")
            return f
        if t.text == "true":
            self.next()
            return ("and", ())
        if t.kind == "lower" and t.text in KINDS and t.text not in INFIX_KINDS:
            return self.parse_prefix_constraint()
        return self.parse_infix_constraint()

    def parse_prefix_constraint(self):
        name = self.next()
        self.expect("(")
        args = [self.parse_term()]
        while self.at(","):
            self.next()
            args.append(self.parse_term())
        close = self.expect(")")
        span = SourceSpan(name.span.start, close.span.end, name.span.line, name.span.column)
        info = KINDS[name.text]
        if len(args) != len(info.args):
            raise ParseError(
                f"{name.text} expects {len(info.args)} arguments, got {len(args)}", span
            )
        return ("c", name.text, tuple(args), span)

    def parse_infix_constraint(self):
        left = self.parse_term()
        op = self.peek()
        if op.text in ("in", "nin", "neq", "subset", "nsubset") or op.text == "=":
            self.next()
        else:
            raise ParseError(
                f"expected a constraint operator, found {op.text or 'end of input'!r}",
                op.span,
            )
        right = self.parse_term()
        kind = "eq" if op.text == "=" else op.text
        span = _term_span(left) or op.span
        return ("c", kind, (left, right), span)

    # --- terms ---

    def parse_term(self):
        t = self.peek()
        if t.text == "{":
            return self.parse_set()
        if t.text == "[":
            return self.parse_pair()
        if t.kind == "int":
            self.next()
            return UrFunctor(t.text, (), t.span)
        if t.kind == "upper":
            self.next()
            return _RawVar(t.text, t.span)
        if t.kind == "lower":
            if t.text == "cp":
                self.next()
                self.expect("(")
                left = self.parse_term()
                self.expect(",")
                right = self.parse_term()
                close = self.expect(")")
                return CartProd(left, right, SourceSpan(t.span.start, close.span.end,
                                                        t.span.line, t.span.column))
            if t.text in RESERVED_WORDS:
                raise ParseError(f"{t.text!r} is a reserved word", t.span)
            self.next()
            if self.at("("):
                self.next()
                args = [self.parse_term()]
                while self.at(","):
                    self.next()
                    args.append(self.parse_term())
                close = self.expect(")")
                return UrFunctor(t.text, tuple(args),
                                 SourceSpan(t.span.start, close.span.end,
                                            t.span.line, t.span.column))
            return UrFunctor(t.text, (), t.span)
        raise ParseError(f"expected a term, found {t.text or 'end of input'!r}", t.span)

    def parse_set(self):
        open_ = self.expect("{")
        if self.at("}"):
            close = self.next()
            return EmptySet(SourceSpan(open_.span.start, close.span.end,
                                       open_.span.line, open_.span.column))
        elems = [self.parse_term()]
        while self.at(","):
            self.next()
            elems.append(self.parse_term())
        rest: object = None
        if self.at("/"):
            self.next()
            rest = self.parse_term()
        close = self.expect("}")
        span = SourceSpan(open_.span.start, close.span.end, open_.span.line, open_.span.column)
        out = rest if rest is not None else EmptySet(span)
        for e in reversed(elems):
            out = ExtSet(e, out, span)
        return out

    def parse_pair(self):
        open_ = self.expect("[")
        first = self.parse_term()
        self.expect(",")
        second = self.parse_term()
        close = self.expect("]")
        return Pair(first, second, SourceSpan(open_.span.start, close.span.end,
                                              open_.span.line, open_.span.column))

    # --- theorem files ---

    def parse_theorem_file(self):
        items = []
        seen_theorem = False
        while not self.at(""):
            t = self.peek()
            if t.text == "theorem":
                items.append(self.parse_theorem_decl())
                seen_theorem = True
                continue
            cmds = self.parse_command_line()
            if not seen_theorem:
                raise DanglingCommand(
                    "proof command before any theorem declaration", cmds[0].span
                )
            items.extend(cmds)
        return items

    def parse_theorem_decl(self):
        kw = self.expect("theorem")
        self.expect("(")
        name = self.next()
        if name.kind not in ("lower", "upper"):
            raise ParseError("theorem name must be an identifier", name.span)
        self.expect(",")
        hyps = self.parse_formula()
        self.expect(",")
        thesis = self.parse_formula()
        close = self.expect(")")
        self.expect(".")
        span = SourceSpan(kw.span.start, close.span.end, kw.span.line, kw.span.column)
        return ("theorem", name.text, hyps, thesis, span)

    def parse_command_line(self):
        cmds = [self.parse_command()]
        while self.at(","):
            self.next()
            cmds.append(self.parse_command())
        self.expect(".")
        return cmds

    def parse_command(self):
        t = self.next()
        if t.text not in COMMAND_WORDS:
            raise ParseError(f"unknown proof command {t.text!r}", t.span)
        if t.text in ("rewrite", "prove", "cases", "counterex"):
            return ScriptCommand(t.text, None, t.span)
        if t.text == "drop":
            self.expect("(")
            self.expect("[")
            items = []
            if not self.at("]"):
                items.append(self.parse_atom())
                while self.at(","):
                    self.next()
                    items.append(self.parse_atom())
            self.expect("]")
            self.expect(")")
            return ScriptCommand("drop", tuple(items), t.span)
        if t.text == "assume":
            self.expect("(")
            f = self.parse_formula()
            self.expect(")")
            return ScriptCommand("assume", f, t.span)
        if t.text == "define":
            self.expect("(")
            con = self.parse_atom()
            self.expect(")")
            return ScriptCommand("define", con, t.span)
        raise ParseError(f"unknown proof command {t.text!r}", t.span)


# ---------------------------------------------------------------------------
# Raw-AST finalization: resolve variable sorts, build real terms.


def _term_span(t) -> Optional[SourceSpan]:
    return getattr(t, "span", None)


def _walk_term_sorts(t, solver: _SortSolver, required: Optional[Sort]):
    if isinstance(t, _RawVar):
        if required is not None:
            solver.require(t.name, required)
        return
    if isinstance(t, UrFunctor):
        for a in t.args:
            _walk_term_sorts(a, solver, Sort.O)
        return
    if isinstance(t, EmptySet):
        return
    if isinstance(t, ExtSet):
        _walk_term_sorts(t.elem, solver, None)
        _walk_term_sorts(t.rest, solver, Sort.SET)
        return
    if isinstance(t, CartProd):
        _walk_term_sorts(t.left, solver, Sort.SET)
        _walk_term_sorts(t.right, solver, Sort.SET)
        return
    if isinstance(t, Pair):
        _walk_term_sorts(t.first, solver, None)
        _walk_term_sorts(t.second, solver, None)
        return
    raise TypeError(f"unexpected raw term {t!r}")


def _static_sort(t) -> Optional[Sort]:
    """Sort of a raw term when determined by structure alone."""
    if isinstance(t, _RawVar):
        return None
    if isinstance(t, (EmptySet, ExtSet, CartProd)):
        return Sort.SET
    if isinstance(t, (UrFunctor, Pair)):
        return Sort.O
    return None


def _soft_unify(a, b, solver: _SortSolver):
    if isinstance(a, _RawVar) and isinstance(b, _RawVar):
        solver.link(a.name, b.name)
        return
    if isinstance(a, _RawVar):
        s = _static_sort(b)
        if s is not None:
            solver.require(a.name, s)
        return
    if isinstance(b, _RawVar):
        _soft_unify(b, a, solver)
        return
    if isinstance(a, Pair) and isinstance(b, Pair):
        _soft_unify(a.first, b.first, solver)
        _soft_unify(a.second, b.second, solver)
        return
    if isinstance(a, ExtSet) and isinstance(b, ExtSet):
        _soft_unify(a.elem, b.elem, solver)
        _soft_unify(a.rest, b.rest, solver)


def _collect_sorts(node, solver: _SortSolver):
    tag = node[0]
    if tag == "c":
        _, kind, args, _span = node
        info = KINDS[kind]
        for req, arg in zip(info.args, args):
            _walk_term_sorts(arg, solver, Sort.SET if req in (SET_ARG, REL_ARG) else None)
        if kind in ("eq", "neq"):
            _soft_unify(args[0], args[1], solver)
    else:
        for p in node[1]:
            _collect_sorts(p, solver)


def _finalize_term(t, solver: _SortSolver) -> Term:
    if isinstance(t, _RawVar):
        return Var(t.name, solver.resolve(t.name), t.span)
    if isinstance(t, UrFunctor):
        if not t.args:
            return t
        return UrFunctor(t.name, tuple(_finalize_term(a, solver) for a in t.args), t.span)
    if isinstance(t, EmptySet):
        return t
    if isinstance(t, ExtSet):
        return ExtSet(_finalize_term(t.elem, solver), _finalize_term(t.rest, solver), t.span)
    if isinstance(t, CartProd):
        return CartProd(_finalize_term(t.left, solver), _finalize_term(t.right, solver), t.span)
    if isinstance(t, Pair):
        return Pair(_finalize_term(t.first, solver), _finalize_term(t.second, solver), t.span)
    raise TypeError(f"unexpected raw term {t!r}")


def _finalize_formula(node, solver: _SortSolver) -> Formula:
    tag = node[0]
    if tag == "c":
        _, kind, args, span = node
        return Constraint(kind, tuple(_finalize_term(a, solver) for a in args), span)
    if tag == "and":
        return And(tuple(_finalize_formula(p, solver) for p in node[1]))
    if tag == "or":
        return Or(tuple(_finalize_formula(p, solver) for p in node[1]))
    raise TypeError(f"unexpected node {node!r}")


def _resolve(node) -> Formula:
    solver = _SortSolver()
    _collect_sorts(node, solver)
    out = _finalize_formula(node, solver)
    check_formula(out)  # raises SortError on structural violations
    return out


def _resolve_shared(nodes) -> list:
    """Finalize several raw formulas against one shared sort environment."""
    solver = _SortSolver()
    for n in nodes:
        _collect_sorts(n, solver)
    out = [_finalize_formula(n, solver) for n in nodes]
    for f in out:
        check_formula(f)
    return out


# ---------------------------------------------------------------------------
# Public entry points


def parse_formula(text: str) -> Formula:
    p = Parser(text)
    node = p.parse_formula()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"unexpected trailing input {tok.text!r}", tok.span)
    return _resolve(node)


def parse_constraint(text: str) -> Constraint:
    f = parse_formula(text)
    if not isinstance(f, Constraint):
        raise ParseError("expected a single constraint")
    return f


def _conjuncts(f: Formula, what: str) -> tuple:
    if isinstance(f, Constraint):
        return (f,)
    if isinstance(f, And):
        out = []
        for p in f.parts:
            out.extend(_conjuncts(p, what))
        return tuple(out)
    raise ParseError(f"{what} must be a conjunction of constraints")


def _command_nodes(cmd: ScriptCommand) -> list:
    if cmd.op == "drop":
        return list(cmd.payload)
    if cmd.op in ("assume", "define"):
        return [cmd.payload]
    return []


def _finalize_command(cmd: ScriptCommand, solver: _SortSolver) -> ScriptCommand:
    if cmd.op == "drop":
        cs = []
        for node in cmd.payload:
            f = _finalize_formula(node, solver)
            check_formula(f)
            if not isinstance(f, Constraint):
                raise ParseError("drop expects a list of constraints", cmd.span)
            cs.append(f)
        return ScriptCommand("drop", tuple(cs), cmd.span)
    if cmd.op == "assume":
        f = _finalize_formula(cmd.payload, solver)
        check_formula(f)
        return ScriptCommand("assume", _conjuncts(f, "assume argument"), cmd.span)
    if cmd.op == "define":
        f = _finalize_formula(cmd.payload, solver)
        check_formula(f)
        if not isinstance(f, Constraint):
            raise ParseError("define expects a single constraint", cmd.span)
        return ScriptCommand("define", f, cmd.span)
    return cmd


def parse_theorem_file(text: str) -> list:
    """Parse a ``.slog`` theorem file into declarations and commands.

    Each theorem and the commands attached to it are sort-resolved in one
    shared environment, so a variable names the same object in the
    declaration and in every command that mentions it.
    """
    p = Parser(text)
    raw_items = p.parse_theorem_file()
    groups = []  # (decl_node, [ScriptCommand...])
    for item in raw_items:
        if isinstance(item, ScriptCommand):
            groups[-1][1].append(item)
        else:
            groups.append((item, []))
    out = []
    for decl_node, cmds in groups:
        _, name, hyps_node, thesis_node, span = decl_node
        solver = _SortSolver()
        _collect_sorts(hyps_node, solver)
        _collect_sorts(thesis_node, solver)
        for cmd in cmds:
            for node in _command_nodes(cmd):
                _collect_sorts(node, solver)
        hyps_f = _finalize_formula(hyps_node, solver)
        thesis_f = _finalize_formula(thesis_node, solver)
        check_formula(hyps_f)
        check_formula(thesis_f)
        out.append(
            TheoremDecl(
                name,
                () if _is_true(hyps_f) else _conjuncts(hyps_f, "theorem hypotheses"),
                _conjuncts(thesis_f, "theorem thesis"),
                span,
            )
        )
        out.extend(_finalize_command(cmd, solver) for cmd in cmds)
    return out


def _is_true(f: Formula) -> bool:
    return isinstance(f, And) and not f.parts


# ---------------------------------------------------------------------------
# Pretty printer


def pretty(x) -> str:
    """Render a term, constraint or formula in concrete syntax.

    ``parse_formula(pretty(f))`` is structurally equal to ``f`` (up to
    source spans) for well-sorted formulas.
    """
    if isinstance(x, (Var, UrFunctor, EmptySet, ExtSet, CartProd, Pair)):
        return _pp_term(x)
    if isinstance(x, Constraint):
        return _pp_constraint(x)
    if isinstance(x, And):
        if not x.parts:
            return "true"
        return " & ".join(_pp_conj_part(p) for p in x.parts)
    if isinstance(x, Or):
        return " or ".join(
            pretty(p) if not isinstance(p, Or) else "(" + pretty(p) + ")" for p in x.parts
        )
    if isinstance(x, tuple):
        if not x:
            return "true"
        return " & ".join(_pp_constraint(con) for con in x)
    raise TypeError(f"cannot pretty-print {x!r}")


def _pp_conj_part(p) -> str:
    if isinstance(p, Or):
        return "(" + pretty(p) + ")"
    if isinstance(p, And):
        return "(" + pretty(p) + ")"
    return pretty(p)


def _pp_constraint(con: Constraint) -> str:
    cached = con.__dict__.get("_ppc")
    if cached is not None:
        return cached
    if con.kind in ("eq", "neq", "in", "nin", "subset", "nsubset"):
        op = "=" if con.kind == "eq" else con.kind
        out = f"{_pp_term(con.args[0])} {op} {_pp_term(con.args[1])}"
    else:
        inner = ",".join(_pp_term(a) for a in con.args)
        out = f"{con.kind}({inner})"
    object.__setattr__(con, "_ppc", out)
    return out


def _pp_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, UrFunctor):
        if not t.args:
            return t.name
        return f"{t.name}({','.join(_pp_term(a) for a in t.args)})"
    if isinstance(t, EmptySet):
        return "{}"
    if isinstance(t, ExtSet):
        elems = []
        rest: Term = t
        while isinstance(rest, ExtSet):
            elems.append(rest.elem)
            rest = rest.rest
        body = ",".join(_pp_term(e) for e in elems)
        if isinstance(rest, EmptySet):
            return "{" + body + "}"
        return "{" + body + " / " + _pp_term(rest) + "}"
    if isinstance(t, CartProd):
        return f"cp({_pp_term(t.left)},{_pp_term(t.right)})"
    if isinstance(t, Pair):
        return f"[{_pp_term(t.first)},{_pp_term(t.second)}]"
    raise TypeError(f"not a term: {t!r}")
