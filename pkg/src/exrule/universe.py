"""Bounded enumeration of databases and Boolean queries.

Property checkers and translation-equivalence suites quantify over all
databases and queries up to explicit bounds; these enumerators produce
them deterministically.  Queries are deduplicated up to isomorphism via a
canonical variable numbering, which keeps the universes tractable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

from .model import Atom, BCQ, Const, Instance, Term, UCQ, Var

__all__ = ["Bounds", "enumerate_databases", "enumerate_bcqs", "enumerate_ucqs",
           "canonical_bcq_key"]


@dataclass(frozen=True)
class Bounds:
    consts: int = 2
    facts: int = 3
    query_atoms: int = 2
    query_vars: int = 2
    disjuncts: int = 2
    depth: int = 4

    @staticmethod
    def parse(text: str) -> "Bounds":
        """Parse `consts=3,facts=4,qatoms=3,depth=4` style bound strings."""
        alias = {"qatoms": "query_atoms", "qvars": "query_vars"}
        kwargs = {}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            key, _, value = part.partition("=")
            key = alias.get(key.strip(), key.strip())
            kwargs[key] = int(value)
        return Bounds(**kwargs)


def _constants(n: int) -> list[Const]:
    return [Const(f"c{i}") for i in range(n)]


def enumerate_databases(schema: dict[str, int], bounds: Bounds,
                        nonempty: bool = True) -> Iterator[Instance]:
    """All databases over the schema with at most `bounds.consts` constants
    and `bounds.facts` facts (constants drawn from a fixed pool)."""
    consts = _constants(bounds.consts)
    base: list[Atom] = []
    for rel in sorted(schema):
        for combo in itertools.product(consts, repeat=schema[rel]):
            base.append(Atom(rel, combo))
    sizes = range(1 if nonempty else 0, bounds.facts + 1)
    for size in sizes:
        for subset in itertools.combinations(base, size):
            yield Instance(frozenset(subset))


def canonical_bcq_key(q: BCQ):
    """Isomorphism-invariant key: minimum over variable permutations of the
    sorted atom tuple with variables renamed positionally."""
    variables = sorted(q.variables(), key=lambda v: v.name)
    best = None
    for perm in itertools.permutations(range(len(variables))):
        renaming: dict[Term, Term] = {
            v: Var(f"#%d" % perm[i]) for i, v in enumerate(variables)}
        key = tuple(sorted(a.substitute(renaming).sort_key() for a in q.atoms))
        if best is None or key < best:
            best = key
    return best


def enumerate_bcqs(schema: dict[str, int], constants: Sequence[Const],
                   max_atoms: int, max_vars: int) -> Iterator[BCQ]:
    """All BCQs over the schema with terms from `constants` plus at most
    `max_vars` variables, up to isomorphism."""
    variables = [Var(f"V{i}") for i in range(max_vars)]
    terms: list[Term] = list(constants) + variables
    base: list[Atom] = []
    for rel in sorted(schema):
        for combo in itertools.product(terms, repeat=schema[rel]):
            base.append(Atom(rel, combo))
    seen = set()
    for size in range(1, max_atoms + 1):
        for subset in itertools.combinations(base, size):
            q = BCQ(frozenset(subset))
            key = canonical_bcq_key(q)
            if key in seen:
                continue
            seen.add(key)
            yield q


def enumerate_ucqs(schema: dict[str, int], constants: Sequence[Const],
                   bounds: Bounds) -> Iterator[UCQ]:
    bcqs = list(enumerate_bcqs(schema, constants, bounds.query_atoms,
                               bounds.query_vars))
    for k in range(1, bounds.disjuncts + 1):
        for combo in itertools.combinations(bcqs, k):
            yield UCQ(frozenset(combo))
