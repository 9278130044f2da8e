"""Ground model: terms, atoms, instances, Boolean queries, homomorphisms.

Terms come in three disjoint kinds: constants, labeled nulls, and
variables.  Databases contain constants only; instances may also contain
nulls; queries may contain variables (implicitly existential).  Everything
here is immutable and hashable, so values can be shared freely.

A C-homomorphism h from instance I to instance J maps every term of I to
a term of J such that h(I) is a subset of J and h fixes the constants in C
pointwise.  Constants outside C are movable, exactly like nulls.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import SchemaError

__all__ = [
    "Term", "Const", "Var", "Null",
    "Atom", "Instance", "BCQ", "UCQ",
    "hom_search", "is_c_homomorphism", "entails_ucq", "c_disjoint_union",
    "freeze_bcq", "instance_schema",
]


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    name: str

    # Rank used for canonical sorting; overridden per kind.
    _KIND = ""

    @property
    def kind(self) -> str:
        return self._KIND

    def sort_key(self) -> tuple[str, str]:
        return (self._KIND, self.name)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const(Term):
    _KIND = "const"


@dataclass(frozen=True)
class Var(Term):
    _KIND = "var"


@dataclass(frozen=True)
class Null(Term):
    """A labeled null.

    Skolem nulls produced by the chase carry a provenance triple
    (rule label, frontier argument tuple, existential variable name); the
    name is rendered deterministically from it, so null equality by name
    coincides with provenance equality.  Provenance is excluded from
    equality and hashing on purpose.
    """

    _KIND = "null"
    provenance: Optional[tuple] = field(default=None, compare=False, repr=False)

    @staticmethod
    def skolem(rule_label: str, frontier: tuple["Term", ...], var: str) -> "Null":
        args = ",".join(t.name for t in frontier)
        return Null(f"_n<{rule_label}|{args}|{var}>", provenance=(rule_label, frontier, var))


# ---------------------------------------------------------------------------
# Atoms and instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    rel: str
    args: tuple[Term, ...]

    def __post_init__(self):
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    @property
    def arity(self) -> int:
        return len(self.args)

    def terms(self) -> set[Term]:
        return set(self.args)

    def sort_key(self):
        return (self.rel, len(self.args), tuple(a.sort_key() for a in self.args))

    def substitute(self, mapping: Mapping[Term, Term]) -> "Atom":
        return Atom(self.rel, tuple(mapping.get(a, a) for a in self.args))

    def is_ground(self) -> bool:
        return all(not isinstance(a, Var) for a in self.args)

    def __str__(self) -> str:
        if not self.args:
            return f"{self.rel}()"
        return f"{self.rel}({', '.join(str(a) for a in self.args)})"


def _sorted_atoms(atoms: Iterable[Atom]) -> tuple[Atom, ...]:
    return tuple(sorted(set(atoms), key=Atom.sort_key))


@dataclass(frozen=True)
class Instance:
    """A finite set of ground atoms (constants and nulls; no variables)."""

    atoms: frozenset[Atom]

    def __post_init__(self):
        if not isinstance(self.atoms, frozenset):
            object.__setattr__(self, "atoms", frozenset(self.atoms))

    @staticmethod
    def of(atoms: Iterable[Atom]) -> "Instance":
        atoms = frozenset(atoms)
        for a in atoms:
            for t in a.args:
                if isinstance(t, Var):
                    raise SchemaError(f"instance atom {a} contains a variable")
        return Instance(atoms)

    @staticmethod
    def empty() -> "Instance":
        return Instance(frozenset())

    def sorted(self) -> tuple[Atom, ...]:
        return _sorted_atoms(self.atoms)

    def terms(self) -> set[Term]:
        out: set[Term] = set()
        for a in self.atoms:
            out.update(a.args)
        return out

    def adom(self) -> set[Const]:
        return {t for t in self.terms() if isinstance(t, Const)}

    def nulls(self) -> set[Null]:
        return {t for t in self.terms() if isinstance(t, Null)}

    def is_database(self) -> bool:
        return not self.nulls()

    def restrict(self, allowed: set[Term]) -> "Instance":
        return Instance(frozenset(a for a in self.atoms if set(a.args) <= allowed))

    def union(self, other: "Instance") -> "Instance":
        return Instance(self.atoms | other.atoms)

    def __contains__(self, atom: Atom) -> bool:
        return atom in self.atoms

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self) -> Iterator[Atom]:
        return iter(self.sorted())

    def __le__(self, other: "Instance") -> bool:
        return self.atoms <= other.atoms

    def __str__(self) -> str:
        return "{" + ", ".join(str(a) for a in self.sorted()) + "}"


def instance_schema(I: Instance) -> dict[str, int]:
    """Relation -> arity map used by an instance; arity conflicts raise."""
    out: dict[str, int] = {}
    for a in I.atoms:
        prev = out.setdefault(a.rel, a.arity)
        if prev != a.arity:
            raise SchemaError(f"relation {a.rel} used with arities {prev} and {a.arity}")
    return out


# ---------------------------------------------------------------------------
# Boolean queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BCQ:
    """A Boolean conjunctive query: a nonempty set of relational atoms.

    All variables are implicitly existentially quantified.
    """

    atoms: frozenset[Atom]

    def __post_init__(self):
        if not isinstance(self.atoms, frozenset):
            object.__setattr__(self, "atoms", frozenset(self.atoms))
        if not self.atoms:
            raise ValueError("a BCQ needs at least one atom")

    @staticmethod
    def of(atoms: Iterable[Atom]) -> "BCQ":
        return BCQ(frozenset(atoms))

    def sorted(self) -> tuple[Atom, ...]:
        return _sorted_atoms(self.atoms)

    def variables(self) -> set[Var]:
        return {t for a in self.atoms for t in a.args if isinstance(t, Var)}

    def constants(self) -> set[Const]:
        return {t for a in self.atoms for t in a.args if isinstance(t, Const)}

    def relations(self) -> set[str]:
        return {a.rel for a in self.atoms}

    def __str__(self) -> str:
        return ", ".join(str(a) for a in self.sorted())


@dataclass(frozen=True)
class UCQ:
    """A Boolean union of conjunctive queries: a nonempty set of BCQs."""

    disjuncts: frozenset[BCQ]

    def __post_init__(self):
        if not isinstance(self.disjuncts, frozenset):
            object.__setattr__(self, "disjuncts", frozenset(self.disjuncts))
        if not self.disjuncts:
            raise ValueError("a UCQ needs at least one disjunct")

    @staticmethod
    def of(*disjuncts: BCQ) -> "UCQ":
        return UCQ(frozenset(disjuncts))

    def constants(self) -> set[Const]:
        out: set[Const] = set()
        for d in self.disjuncts:
            out |= d.constants()
        return out

    def sorted(self) -> tuple[BCQ, ...]:
        return tuple(sorted(self.disjuncts, key=lambda b: tuple(a.sort_key() for a in b.sorted())))

    def __str__(self) -> str:
        return " ; ".join(str(d) for d in self.sorted())


def freeze_bcq(q: BCQ) -> Instance:
    """[q]: the atoms of q with each variable read as a labeled null."""
    mapping: dict[Term, Term] = {v: Null(f"_v:{v.name}") for v in q.variables()}
    return Instance(frozenset(a.substitute(mapping) for a in q.atoms))


# ---------------------------------------------------------------------------
# Homomorphisms
# ---------------------------------------------------------------------------

def _check_schemas(source: Instance, target: Instance) -> None:
    s, t = instance_schema(source), instance_schema(target)
    for rel, ar in s.items():
        if rel in t and t[rel] != ar:
            raise SchemaError(f"relation {rel} has arity {ar} in source but {t[rel]} in target")


def hom_search(source: Instance, target: Instance,
               fixed: Iterable[Const] = ()) -> Optional[dict[Term, Term]]:
    """Find a C-homomorphism from `source` into `target`, or None.

    Complete backtracking search: source atoms are matched one at a time
    against target atoms of the same relation, extending a partial term
    mapping.  Atoms are processed largest-arity first so conflicts surface
    early; the order never changes the answer.
    """
    _check_schemas(source, target)
    fixed = set(fixed)
    mapping: dict[Term, Term] = {}
    for c in fixed:
        mapping[c] = c

    by_rel: dict[str, list[Atom]] = {}
    for a in target.atoms:
        by_rel.setdefault(a.rel, []).append(a)
    for atoms in by_rel.values():
        atoms.sort(key=Atom.sort_key)

    todo = sorted(source.atoms, key=lambda a: (-a.arity, a.sort_key()))

    def extend(i: int) -> bool:
        if i == len(todo):
            return True
        atom = todo[i]
        for cand in by_rel.get(atom.rel, ()):
            added: list[Term] = []
            ok = True
            for s_t, t_t in zip(atom.args, cand.args):
                bound = mapping.get(s_t)
                if bound is None:
                    mapping[s_t] = t_t
                    added.append(s_t)
                elif bound != t_t:
                    ok = False
                    break
            if ok and extend(i + 1):
                return True
            for s_t in added:
                del mapping[s_t]
        return False

    if extend(0):
        return {t: mapping.get(t, t) for t in source.terms()}
    return None


def is_c_homomorphism(mapping: Mapping[Term, Term], source: Instance,
                      target: Instance, fixed: Iterable[Const] = ()) -> bool:
    for c in fixed:
        if c in source.terms() and mapping.get(c, c) != c:
            return False
    for a in source.atoms:
        if a.substitute(mapping) not in target:
            return False
    return True


def entails_ucq(I: Instance, q: UCQ | BCQ) -> bool:
    """I |= q: some disjunct maps homomorphically into I fixing its constants."""
    disjuncts = q.disjuncts if isinstance(q, UCQ) else {q}
    I_terms = I.terms()
    for p in disjuncts:
        if any(c not in I_terms for c in p.constants()):
            continue  # an unmatched constant can never be mapped
        try:
            if hom_search(freeze_bcq(p), I, fixed=p.constants()) is not None:
                return True
        except SchemaError:
            continue  # arity clash with I: this disjunct cannot match
    return False


# ---------------------------------------------------------------------------
# C-disjoint union
# ---------------------------------------------------------------------------

def c_disjoint_union(parts: Sequence[Instance], shared: Iterable[Const] = ()) -> Instance:
    """Union of copies of `parts` renamed apart except for `shared` constants.

    Nulls and constants outside `shared` get a deterministic `#<index>`
    suffix per part, so repeated runs produce identical output.
    """
    shared = set(shared)
    out: set[Atom] = set()
    for idx, part in enumerate(parts):
        mapping: dict[Term, Term] = {}
        for t in part.terms():
            if isinstance(t, Const) and t in shared:
                mapping[t] = t
            elif isinstance(t, Const):
                mapping[t] = Const(f"{t.name}#{idx}")
            else:
                mapping[t] = Null(f"{t.name}#{idx}")
        out.update(a.substitute(mapping) for a in part.atoms)
    return Instance(frozenset(out))


# ---------------------------------------------------------------------------
# Small enumeration helpers used by oracles and tests
# ---------------------------------------------------------------------------

def all_term_maps(source_terms: Sequence[Term], target_terms: Sequence[Term],
                  fixed: Iterable[Const] = ()) -> Iterator[dict[Term, Term]]:
    """Every total map source->target fixing `fixed` (brute-force oracle)."""
    fixed = set(fixed)
    source_terms = list(source_terms)
    pools = []
    for t in source_terms:
        pools.append([t] if t in fixed else list(target_terms))
    for combo in itertools.product(*pools):
        yield dict(zip(source_terms, combo))
