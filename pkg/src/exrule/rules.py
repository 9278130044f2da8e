"""Dependencies (existential rules), dialect classification, canonical form.

A dependency has a body (conjunction of relational atoms, possibly empty
when written `true -> ...`) and a head (nonempty list of disjuncts, each a
conjunction of relational or equality atoms).  Head variables absent from
the body are existential; there are no explicit quantifiers.

Dialects, ordered by inclusion:

    linear TGD  <  TGD  <  DTGD  <  DED

linear: one body atom, one equality-free single-disjunct head;
TGD: one disjunct, no equality; DTGD: no equality; DED: anything above.
A dependency is *canonical* when every head disjunct is a single atom.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .errors import RuleError, SchemaError
from .model import Atom, Const, Term, Var

__all__ = [
    "Dialect", "Equality", "HeadAtom", "Dependency", "RuleSet",
    "classify", "classify_ruleset", "canonicalize",
    "RESERVED_PREFIX", "AUX_PREFIX",
]

RESERVED_PREFIX = "_"
AUX_PREFIX = "_aux"


class Dialect(enum.IntEnum):
    LINEAR = 0
    TGD = 1
    DTGD = 2
    DED = 3

    def __str__(self) -> str:
        return {0: "linear-TGD", 1: "TGD", 2: "DTGD", 3: "DED"}[self.value]


@dataclass(frozen=True)
class Equality:
    left: Term
    right: Term

    def terms(self) -> set[Term]:
        return {self.left, self.right}

    def substitute(self, mapping) -> "Equality":
        return Equality(mapping.get(self.left, self.left),
                        mapping.get(self.right, self.right))

    def __str__(self) -> str:
        return f"{self.left} = {self.right}"


HeadAtom = Union[Atom, Equality]


def _head_vars(disjuncts: tuple[tuple[HeadAtom, ...], ...]) -> set[Var]:
    out: set[Var] = set()
    for d in disjuncts:
        for a in d:
            out.update(t for t in a.terms() if isinstance(t, Var))
    return out


@dataclass(frozen=True)
class Dependency:
    body: tuple[Atom, ...]
    head: tuple[tuple[HeadAtom, ...], ...]
    label: str = ""

    def __post_init__(self):
        if not self.head or any(not d for d in self.head):
            raise RuleError("head must be a nonempty list of nonempty disjuncts")

    def universal_vars(self) -> set[Var]:
        return {t for a in self.body for t in a.args if isinstance(t, Var)}

    def existential_vars(self) -> set[Var]:
        return _head_vars(self.head) - self.universal_vars()

    def frontier(self) -> tuple[Var, ...]:
        """Body variables that also occur in the head, in name order."""
        shared = self.universal_vars() & _head_vars(self.head)
        return tuple(sorted(shared, key=lambda v: v.name))

    def is_canonical(self) -> bool:
        return all(len(d) == 1 for d in self.head)

    def has_equality(self) -> bool:
        return any(isinstance(a, Equality) for d in self.head for a in d)

    def relations(self) -> set[str]:
        out = {a.rel for a in self.body}
        out.update(a.rel for d in self.head for a in d if isinstance(a, Atom))
        return out

    def constants(self) -> set[Const]:
        out = {t for a in self.body for t in a.args if isinstance(t, Const)}
        for d in self.head:
            for a in d:
                out.update(t for t in a.terms() if isinstance(t, Const))
        return out

    def __str__(self) -> str:
        body = ", ".join(str(a) for a in self.body) if self.body else "true"
        head = " | ".join(", ".join(str(a) for a in d) for d in self.head)
        return f"{body} -> {head}."


def classify(rule: Dependency) -> Dialect:
    """Minimal dialect that contains the rule."""
    if rule.has_equality():
        return Dialect.DED
    if len(rule.head) > 1:
        return Dialect.DTGD
    if len(rule.body) == 1:
        return Dialect.LINEAR
    return Dialect.TGD


@dataclass(frozen=True)
class RuleSet:
    """A finite list of dependencies plus declared data/query schemas.

    The working schema covers every symbol that occurs anywhere (declared
    or used in a rule); data and query schemas must be disjoint.
    """

    rules: tuple[Dependency, ...]
    data_schema: dict[str, int] = field(default_factory=dict)
    query_schema: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.rules, tuple):
            object.__setattr__(self, "rules", tuple(self.rules))
        labeled = []
        for i, r in enumerate(self.rules):
            labeled.append(r if r.label else Dependency(r.body, r.head, f"r{i}"))
        object.__setattr__(self, "rules", tuple(labeled))
        self.validate()

    def validate(self) -> None:
        overlap = set(self.data_schema) & set(self.query_schema)
        if overlap:
            raise SchemaError(f"data and query schemas overlap: {sorted(overlap)}")
        self.schema()  # raises on arity conflicts
        seen: set[str] = set()
        for r in self.rules:
            if r.label in seen:
                raise RuleError(f"duplicate rule label {r.label!r}")
            seen.add(r.label)

    def schema(self) -> dict[str, int]:
        out = dict(self.data_schema)
        for rel, ar in self.query_schema.items():
            if out.setdefault(rel, ar) != ar:
                raise SchemaError(f"relation {rel} declared with conflicting arities")
        for r in self.rules:
            atoms: list[Atom] = list(r.body)
            atoms.extend(a for d in r.head for a in d if isinstance(a, Atom))
            for a in atoms:
                if out.setdefault(a.rel, a.arity) != a.arity:
                    raise SchemaError(
                        f"relation {a.rel} used with arity {a.arity}, "
                        f"declared/used elsewhere with {out[a.rel]}")
        return out

    def dialect(self) -> Dialect:
        if not self.rules:
            return Dialect.LINEAR
        return Dialect(max(classify(r) for r in self.rules))

    def is_canonical(self) -> bool:
        return all(r.is_canonical() for r in self.rules)

    def rule_by_label(self, label: str) -> Dependency:
        for r in self.rules:
            if r.label == label:
                return r
        raise RuleError(f"no rule labeled {label!r}")

    def with_rules(self, rules: Iterable[Dependency]) -> "RuleSet":
        return RuleSet(tuple(rules), dict(self.data_schema), dict(self.query_schema))


def classify_ruleset(rs: RuleSet) -> Dialect:
    return rs.dialect()


def canonicalize(rs: RuleSet) -> RuleSet:
    """Rewrite every multi-atom head disjunct through an auxiliary symbol.

    A disjunct psi(x, z) with two or more atoms becomes a fresh atom
    Aux(vars(psi)) in the original head plus one projection rule
    Aux(vars(psi)) -> alpha per atom alpha of psi.  Auxiliary symbols join
    the working schema but neither the data nor the query schema.  Already
    canonical rule sets are returned unchanged (same object).
    """
    if rs.is_canonical():
        return rs
    existing = set(rs.schema())
    new_rules: list[Dependency] = []
    projections: list[Dependency] = []
    for ri, rule in enumerate(rs.rules):
        if rule.is_canonical():
            new_rules.append(rule)
            continue
        disjuncts: list[tuple[HeadAtom, ...]] = []
        for di, disjunct in enumerate(rule.head):
            if len(disjunct) == 1:
                disjuncts.append(disjunct)
                continue
            dvars = tuple(sorted(
                {t for a in disjunct for t in a.terms() if isinstance(t, Var)},
                key=lambda v: v.name))
            aux = f"{AUX_PREFIX}{ri}_{di}"
            if aux in existing:
                raise RuleError(f"auxiliary name {aux} already in use")
            aux_atom = Atom(aux, dvars)
            disjuncts.append((aux_atom,))
            for pi, a in enumerate(disjunct):
                projections.append(
                    Dependency((aux_atom,), ((a,),), f"{rule.label}_p{di}_{pi}"))
        new_rules.append(Dependency(rule.body, tuple(disjuncts), rule.label))
    return rs.with_rules(new_rules + projections)
