"""Text formats: rule programs (.rules), databases (.db), queries (.query).

All three share one tokenizer.  `%` starts a comment; an optional leading
`%format exrule/1` line pins the format version.  Identifiers starting
with an uppercase letter are variables, lowercase are constants, `_n...`
are nulls.  The underscore prefix is reserved for generated symbols and is
rejected in user input unless `allow_reserved` is set (the CLI sets it
when re-reading files this package wrote itself).

Rule grammar:

    @data: P/1, E/2          declares the data schema
    @query: Q/1              declares the query schema
    P(X) -> Q(X) | R(X).     head disjuncts separated by |
    true -> E(X, Y).         empty body; head variables are existential
    R(X, Y) -> X = Y.        equality heads (DED dialect only)

Query grammar:  `E(X,Y), Q(Y) ; R(a).`  (`;` separates disjuncts).
Database grammar: one fact per line, `P(a, b).`
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from .errors import ParseError, RuleError
from .model import Atom, BCQ, Const, Instance, Null, Term, UCQ, Var
from .rules import Dependency, Equality, HeadAtom, RuleSet

__all__ = [
    "parse_program", "parse_database", "parse_query", "parse_atom_text",
    "pretty_program", "pretty_rule", "pretty_database", "pretty_query",
    "FORMAT_LINE",
]

FORMAT_LINE = "%format exrule/1"
_VC_PREFIX = "_vc_"
_NULL_PREFIX = "_n"


@dataclass(frozen=True)
class _Tok:
    kind: str  # ident, punct, eof
    text: str
    line: int
    col: int


_PUNCT2 = ("->",)
_PUNCT1 = "(),|=.;"


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("->", i):
            toks.append(_Tok("punct", "->", line, col))
            i += 2
            col += 2
            continue
        if c in _PUNCT1:
            toks.append(_Tok("punct", c, line, col))
            i += 1
            col += 1
            continue
        if c == "@":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Tok("directive", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_#"):
                j += 1
            toks.append(_Tok("ident", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_#"):
                j += 1
            toks.append(_Tok("ident", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(_Tok("eof", "", line, col))
    return toks


def _check_format_line(text: str) -> None:
    for raw in text.splitlines():
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("%format"):
            if stripped != FORMAT_LINE:
                raise ParseError(f"unsupported format line {stripped!r}", 1, 1)
        return


class _Parser:
    def __init__(self, text: str, allow_reserved: bool = False):
        _check_format_line(text)
        self.toks = _tokenize(text)
        self.pos = 0
        self.allow_reserved = allow_reserved

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}",
                             t.line, t.col)
        return t

    def fail(self, msg: str, tok: Optional[_Tok] = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.line, tok.col)

    # -- terms and atoms ---------------------------------------------------

    def term(self, allow_null: bool) -> Term:
        t = self.next()
        if t.kind != "ident":
            self.fail(f"expected a term, found {t.text!r}", t)
        name = t.text
        if name[0].isupper():
            return Var(name)
        if name.startswith(_VC_PREFIX):
            if not self.allow_reserved:
                self.fail(f"reserved identifier {name!r}", t)
            return Var(name)
        if name.startswith(_NULL_PREFIX):
            if not allow_null:
                self.fail(f"null {name!r} not allowed here", t)
            return Null(name)
        if name.startswith("_"):
            self.fail(f"reserved identifier {name!r}", t)
        return Const(name)

    def relation(self) -> _Tok:
        t = self.next()
        if t.kind != "ident":
            self.fail(f"expected a relation symbol, found {t.text!r}", t)
        if t.text.startswith("_") and not self.allow_reserved:
            self.fail(f"reserved relation name {t.text!r}", t)
        return t

    def atom(self, allow_null: bool) -> Atom:
        rel = self.relation()
        self.expect("(")
        args: list[Term] = []
        if self.peek().text != ")":
            args.append(self.term(allow_null))
            while self.peek().text == ",":
                self.next()
                args.append(self.term(allow_null))
        self.expect(")")
        return Atom(rel.text, tuple(args))

    def head_atom(self) -> HeadAtom:
        # Either `rel(...)` or `t1 = t2`; decided by the token after the name.
        if self.toks[self.pos + 1].text == "(":
            return self.atom(allow_null=False)
        left = self.term(allow_null=False)
        self.expect("=")
        right = self.term(allow_null=False)
        return Equality(left, right)


# ---------------------------------------------------------------------------
# Rule programs
# ---------------------------------------------------------------------------

def parse_program(text: str, allow_reserved: bool = False) -> RuleSet:
    """Parse a `.rules` source into a RuleSet.

    Raises ParseError with line/column on syntax errors and SchemaError or
    RuleError on semantic ones (arity conflicts, duplicate declarations).
    """
    # Arity declarations use `P/1`, so `/` must tokenize; simplest is a
    # dedicated pre-pass over directive lines, leaving rules to the parser.
    data_schema: dict[str, int] = {}
    query_schema: dict[str, int] = {}
    rule_lines: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("%", 1)[0].strip()
        if not stripped:
            rule_lines.append("")
            continue
        if stripped.startswith("@"):
            _parse_directive(stripped, lineno, data_schema, query_schema,
                             allow_reserved)
            rule_lines.append("")
        else:
            rule_lines.append(raw.split("%", 1)[0])
    _check_format_line(text)

    p = _Parser("\n".join(rule_lines), allow_reserved)
    rules: list[Dependency] = []
    while p.peek().kind != "eof":
        rules.append(_parse_rule(p))
    rs = RuleSet(tuple(rules), data_schema, query_schema)
    _reject_unsafe(rs)
    return rs


def _parse_directive(line: str, lineno: int, data: dict[str, int],
                     query: dict[str, int], allow_reserved: bool) -> None:
    head, sep, rest = line.partition(":")
    head = head.strip()
    if head not in ("@data", "@query") or not sep:
        raise ParseError(f"unknown directive {head!r}", lineno, 1)
    target = data if head == "@data" else query
    for part in rest.split(","):
        part = part.strip()
        if not part:
            raise ParseError("empty declaration", lineno, 1)
        name, slash, arity = part.partition("/")
        name = name.strip()
        if not slash or not arity.strip().isdigit():
            raise ParseError(f"declaration {part!r} must look like P/2", lineno, 1)
        if not name or not (name[0].isalpha() or name[0] == "_"):
            raise ParseError(f"bad relation name {name!r}", lineno, 1)
        if name.startswith("_") and not allow_reserved:
            raise ParseError(f"reserved relation name {name!r}", lineno, 1)
        if name in target:
            raise ParseError(f"relation {name} declared twice", lineno, 1)
        target[name] = int(arity.strip())  # data/query overlap caught by RuleSet


def _parse_rule(p: _Parser) -> Dependency:
    body: list[Atom] = []
    if p.peek().text == "true" and p.toks[p.pos + 1].text == "->":
        p.next()
    else:
        body.append(p.atom(allow_null=False))
        while p.peek().text == ",":
            p.next()
            body.append(p.atom(allow_null=False))
    p.expect("->")
    head: list[tuple[HeadAtom, ...]] = []
    while True:
        disjunct: list[HeadAtom] = [p.head_atom()]
        while p.peek().text == ",":
            p.next()
            disjunct.append(p.head_atom())
        head.append(tuple(disjunct))
        if p.peek().text == "|":
            p.next()
            continue
        break
    p.expect(".")
    return Dependency(tuple(body), tuple(head))


def _reject_unsafe(rs: RuleSet) -> None:
    # With implicit existentials every head-only variable is existential,
    # so the only remaining safety hazard is an equality with no grounding
    # route at all; nothing to reject today, but keep the hook for rules
    # built programmatically.
    for r in rs.rules:
        if not r.head:
            raise RuleError(f"rule {r.label} has an empty head")


# ---------------------------------------------------------------------------
# Databases and queries
# ---------------------------------------------------------------------------

def parse_database(text: str, allow_reserved: bool = False) -> Instance:
    p = _Parser(text, allow_reserved)
    atoms: list[Atom] = []
    while p.peek().kind != "eof":
        atoms.append(p.atom(allow_null=True))
        p.expect(".")
    return Instance.of(atoms)


def parse_query(text: str, allow_reserved: bool = False) -> UCQ:
    p = _Parser(text, allow_reserved)
    disjuncts: list[BCQ] = []
    while True:
        atoms = [p.atom(allow_null=False)]
        while p.peek().text == ",":
            p.next()
            atoms.append(p.atom(allow_null=False))
        disjuncts.append(BCQ.of(atoms))
        if p.peek().text == ";":
            p.next()
            continue
        break
    if p.peek().text == ".":
        p.next()
    if p.peek().kind != "eof":
        p.fail(f"trailing input {p.peek().text!r}")
    return UCQ(frozenset(disjuncts))


def parse_atom_text(text: str, allow_reserved: bool = False,
                    allow_null: bool = True) -> Atom:
    p = _Parser(text, allow_reserved)
    a = p.atom(allow_null=allow_null)
    if p.peek().text == ".":
        p.next()
    if p.peek().kind != "eof":
        p.fail("trailing input after atom")
    return a


# ---------------------------------------------------------------------------
# Pretty printing (inverse of the parsers on abstract syntax)
# ---------------------------------------------------------------------------

def pretty_rule(rule: Dependency) -> str:
    return str(rule)


def pretty_program(rs: RuleSet, header: bool = True) -> str:
    lines: list[str] = []
    if header:
        lines.append(FORMAT_LINE)
    if rs.data_schema:
        decls = ", ".join(f"{r}/{a}" for r, a in sorted(rs.data_schema.items()))
        lines.append(f"@data: {decls}")
    if rs.query_schema:
        decls = ", ".join(f"{r}/{a}" for r, a in sorted(rs.query_schema.items()))
        lines.append(f"@query: {decls}")
    lines.extend(pretty_rule(r) for r in rs.rules)
    return "\n".join(lines) + "\n"


def pretty_database(I: Instance, header: bool = True) -> str:
    lines = [FORMAT_LINE] if header else []
    lines.extend(f"{a}." for a in I.sorted())
    return "\n".join(lines) + "\n"


def pretty_query(q: UCQ, header: bool = False) -> str:
    body = " ;\n".join(str(d) for d in q.sorted())
    return (FORMAT_LINE + "\n" if header else "") + body + ".\n"
