"""Bounded-universe checkers for semantic properties of rule ontologies.

The properties quantify over all databases and queries; these checkers
sweep explicit finite universes and never silently truncate: a run that
could not decide every enumerated case (a chase failed to saturate within
its round bound) reports INCONCLUSIVE rather than pretending the sweep was
complete.  COUNTEREXAMPLE verdicts carry a witness that replays.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .chase import (
    DEFAULT_MAX_FACTS, Entailment, certain_answer, chase, nd_entails,
    skolem_chase_rounds,
)
from .errors import DialectError, InconclusiveError
from .model import (
    Atom, BCQ, Const, Instance, Term, UCQ, Var,
    c_disjoint_union, entails_ucq, freeze_bcq, hom_search,
)
from .rules import Dialect, RuleSet, canonicalize
from .translate import ded_to_dtgd
from .universe import Bounds, enumerate_bcqs, enumerate_databases

__all__ = [
    "VerdictStatus", "Verdict", "OntologyOracle",
    "check_query_constructivity", "check_db_hom_closure",
    "check_const_subst_closure", "check_data_constructivity",
    "is_inseparable", "is_most_specific", "is_prime",
    "universal_model",
]


class VerdictStatus(enum.Enum):
    NO_COUNTEREXAMPLE = "NO_COUNTEREXAMPLE"
    COUNTEREXAMPLE = "COUNTEREXAMPLE"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class Verdict:
    status: VerdictStatus
    bounds: Bounds
    checked: int = 0
    undecided: int = 0
    witness: Optional[dict] = None

    def to_json(self) -> dict:
        out = {
            "format": "exrule/1",
            "status": self.status.value,
            "bounds": vars(self.bounds),
            "checked": self.checked,
            "undecided": self.undecided,
        }
        if self.witness is not None:
            out["witness"] = {k: str(v) for k, v in self.witness.items()}
        return out


def _executable(rs: RuleSet) -> RuleSet:
    """Rules the chase can run: canonical and equality-free (equality goes
    through the saturation translation first)."""
    if rs.dialect() == Dialect.DED:
        rs = ded_to_dtgd(canonicalize(rs)).rules
    return canonicalize(rs)


def _queries_for(rs: RuleSet, D: Instance, bounds: Bounds) -> list[BCQ]:
    consts = sorted(D.adom(), key=lambda c: c.name)
    return list(enumerate_bcqs(rs.query_schema, consts,
                               bounds.query_atoms, bounds.query_vars))


@dataclass
class OntologyOracle:
    """Membership oracle for the query class decided by (D, rules).

    Raises InconclusiveError when the chase cannot decide within the round
    bound, so callers can distinguish `no` from `don't know`.
    """

    D: Instance
    rules: RuleSet
    depth: int
    max_facts: int = DEFAULT_MAX_FACTS

    def contains(self, q: BCQ | UCQ) -> bool:
        res = certain_answer(self.D, self.rules, q, self.depth,
                             max_facts=self.max_facts)
        if res.status is Entailment.UNKNOWN:
            raise InconclusiveError(
                f"chase undecided at depth {self.depth} for {q}")
        return res.status is Entailment.ENTAILED

    def constants(self) -> list[Const]:
        return sorted(self.D.adom(), key=lambda c: c.name)


# ---------------------------------------------------------------------------
# Query constructivity
# ---------------------------------------------------------------------------

def check_query_constructivity(rs: RuleSet, bounds: Bounds) -> Verdict:
    """Search for (D, p, q) with the disjunction entailed but neither
    disjunct; only saturated chases count as decisions."""
    if rs.dialect() > Dialect.DTGD:
        raise DialectError("query constructivity is checked on equality-free rules")
    ex = _executable(rs)
    verdict = Verdict(VerdictStatus.NO_COUNTEREXAMPLE, bounds)
    for D in enumerate_databases(rs.data_schema, bounds):
        queries = _queries_for(rs, D, bounds)
        for p, q in itertools.combinations(queries, 2):
            verdict.checked += 1
            r_or = certain_answer(D, ex, UCQ.of(p, q), bounds.depth)
            r_p = certain_answer(D, ex, p, bounds.depth)
            r_q = certain_answer(D, ex, q, bounds.depth)
            statuses = {r_or.status, r_p.status, r_q.status}
            if Entailment.UNKNOWN in statuses:
                verdict.undecided += 1
                continue
            if (r_or.status is Entailment.ENTAILED
                    and r_p.status is Entailment.NOT_ENTAILED
                    and r_q.status is Entailment.NOT_ENTAILED):
                verdict.status = VerdictStatus.COUNTEREXAMPLE
                verdict.witness = {"db": D, "p": p, "q": q}
                return verdict
    if verdict.undecided:
        verdict.status = VerdictStatus.INCONCLUSIVE
    return verdict


# ---------------------------------------------------------------------------
# Closure under database homomorphisms and constant substitutions
# ---------------------------------------------------------------------------

def check_db_hom_closure(rs: RuleSet, bounds: Bounds) -> Verdict:
    verdict = Verdict(VerdictStatus.NO_COUNTEREXAMPLE, bounds)
    ex = _executable(rs)
    dbs = list(enumerate_databases(rs.data_schema, bounds))
    for D in dbs:
        for q in _queries_for(rs, D, bounds):
            res = certain_answer(D, ex, q, bounds.depth)
            if res.status is Entailment.UNKNOWN:
                verdict.undecided += 1
                continue
            if res.status is not Entailment.ENTAILED:
                continue
            for D2 in dbs:
                if hom_search(D, D2, fixed=q.constants()) is None:
                    continue
                verdict.checked += 1
                res2 = certain_answer(D2, ex, q, bounds.depth)
                if res2.status is Entailment.UNKNOWN:
                    verdict.undecided += 1
                elif res2.status is Entailment.NOT_ENTAILED:
                    verdict.status = VerdictStatus.COUNTEREXAMPLE
                    verdict.witness = {"db": D, "db2": D2, "query": q}
                    return verdict
    if verdict.undecided:
        verdict.status = VerdictStatus.INCONCLUSIVE
    return verdict


def _constant_maps(domain: Sequence[Const],
                   pool: Sequence[Const]) -> Iterator[dict[Term, Term]]:
    for combo in itertools.product(pool, repeat=len(domain)):
        yield dict(zip(domain, combo))


def check_const_subst_closure(rs: RuleSet, bounds: Bounds) -> Verdict:
    verdict = Verdict(VerdictStatus.NO_COUNTEREXAMPLE, bounds)
    ex = _executable(rs)
    pool = [Const(f"c{i}") for i in range(bounds.consts)]
    for D in enumerate_databases(rs.data_schema, bounds):
        adom = sorted(D.adom(), key=lambda c: c.name)
        for q in _queries_for(rs, D, bounds):
            res = certain_answer(D, ex, q, bounds.depth)
            if res.status is Entailment.UNKNOWN:
                verdict.undecided += 1
                continue
            if res.status is not Entailment.ENTAILED:
                continue
            for tau in _constant_maps(adom, pool):
                verdict.checked += 1
                D2 = Instance(frozenset(a.substitute(tau) for a in D.atoms))
                q2 = BCQ(frozenset(a.substitute(tau) for a in q.atoms))
                res2 = certain_answer(D2, ex, q2, bounds.depth)
                if res2.status is Entailment.UNKNOWN:
                    verdict.undecided += 1
                elif res2.status is Entailment.NOT_ENTAILED:
                    verdict.status = VerdictStatus.COUNTEREXAMPLE
                    verdict.witness = {"db": D, "query": q,
                                       "map": {str(k): str(v)
                                               for k, v in tau.items()}}
                    return verdict
    if verdict.undecided:
        verdict.status = VerdictStatus.INCONCLUSIVE
    return verdict


# ---------------------------------------------------------------------------
# Inseparability, most-specificity, primality
# ---------------------------------------------------------------------------

def is_inseparable(q: BCQ) -> bool:
    """No pair of proper nonempty subqueries is jointly equivalent to q.

    A conjunction of two subqueries quantifies them separately, so its
    frozen form is the constant-sharing disjoint union; equivalence then
    reduces to one homomorphism from [q] into that union.
    """
    atoms = sorted(q.atoms, key=Atom.sort_key)
    if len(atoms) <= 1:
        return True
    frozen_q = freeze_bcq(q)
    consts = q.constants()
    n = len(atoms)
    for r in range(1, n):
        for s1 in itertools.combinations(atoms, r):
            for r2 in range(1, n):
                for s2 in itertools.combinations(atoms, r2):
                    union = c_disjoint_union(
                        [freeze_bcq(BCQ(frozenset(s1))),
                         freeze_bcq(BCQ(frozenset(s2)))],
                        shared=consts)
                    if hom_search(frozen_q, union, fixed=consts) is not None:
                        return False
    return True


def is_most_specific(q: BCQ, oracle: OntologyOracle) -> bool:
    """No substitution of constants for at least one variable stays in the
    decided class."""
    variables = sorted(q.variables(), key=lambda v: v.name)
    consts = oracle.constants()
    for size in range(1, len(variables) + 1):
        for chosen in itertools.combinations(variables, size):
            for values in itertools.product(consts, repeat=size):
                mapping = dict(zip(chosen, values))
                instance = BCQ(frozenset(a.substitute(mapping) for a in q.atoms))
                if oracle.contains(instance):
                    return False
    return True


def is_prime(q: BCQ, oracle: OntologyOracle) -> bool:
    return is_inseparable(q) and is_most_specific(q, oracle)


# ---------------------------------------------------------------------------
# Data constructivity
# ---------------------------------------------------------------------------

def check_data_constructivity(rs: RuleSet, bounds: Bounds) -> Verdict:
    """Search for a prime query entailed from a union of databases but from
    neither part.  For linear programs the chase of the union is also
    cross-checked against the union of the chases by two-way homomorphism
    on every computed prefix."""
    if rs.dialect() > Dialect.TGD and any(len(r.head) > 1 for r in rs.rules):
        raise DialectError("data constructivity is a disjunction-free check")
    ex = _executable(rs)
    linear = rs.dialect() == Dialect.LINEAR
    verdict = Verdict(VerdictStatus.NO_COUNTEREXAMPLE, bounds)
    dbs = list(enumerate_databases(rs.data_schema, bounds))
    for D, D2 in itertools.combinations_with_replacement(dbs, 2):
        union = D.union(D2)
        oracle = OntologyOracle(union, ex, bounds.depth)
        oracle_d = OntologyOracle(D, ex, bounds.depth)
        oracle_d2 = OntologyOracle(D2, ex, bounds.depth)
        if linear:
            failure = _union_chase_mismatch(ex, D, D2, min(bounds.depth, 3))
            if failure is not None:
                verdict.status = VerdictStatus.COUNTEREXAMPLE
                verdict.witness = {"db": D, "db2": D2, "detail": failure}
                return verdict
        for q in _queries_for(rs, union, bounds):
            verdict.checked += 1
            try:
                if not oracle.contains(q) or not is_prime(q, oracle):
                    continue
                in_d = oracle_d.contains(q)
                in_d2 = oracle_d2.contains(q)
            except InconclusiveError:
                verdict.undecided += 1
                continue
            if not in_d and not in_d2:
                verdict.status = VerdictStatus.COUNTEREXAMPLE
                verdict.witness = {"db": D, "db2": D2, "query": q}
                return verdict
    if verdict.undecided:
        verdict.status = VerdictStatus.INCONCLUSIVE
    return verdict


def union_chase_equivalent(rs: RuleSet, D: Instance, D2: Instance,
                           rounds: int) -> bool:
    """Two-way homomorphism between the chase of a union and the union of
    the chases, on every round prefix."""
    return _union_chase_mismatch(canonicalize(rs), D, D2, rounds) is None


def _union_chase_mismatch(ex: RuleSet, D: Instance, D2: Instance,
                          rounds: int) -> Optional[str]:
    fixed = D.adom() | D2.adom()
    left = list(skolem_chase_rounds(D.union(D2), ex, rounds))
    right_a = list(skolem_chase_rounds(D, ex, rounds))
    right_b = list(skolem_chase_rounds(D2, ex, rounds))

    def at(rounds_list, i):
        return rounds_list[min(i, len(rounds_list) - 1)]

    for i in range(rounds + 1):
        joint = at(left, i)
        split = at(right_a, i).union(at(right_b, i))
        if hom_search(joint, split, fixed=fixed) is None:
            return f"no homomorphism into the split chases at round {i}"
        if hom_search(split, joint, fixed=fixed) is None:
            return f"no homomorphism back from the split chases at round {i}"
    return None


# ---------------------------------------------------------------------------
# Universal model
# ---------------------------------------------------------------------------

def universal_model(D: Instance, rs: RuleSet, m: int, depth: int = 6,
                    max_facts: int = DEFAULT_MAX_FACTS) -> Instance:
    """Constant-sharing disjoint union of the frozen bodies of every
    entailed query with at most m atoms and m variables.

    The chase must saturate within the round bound; otherwise the model
    would silently miss queries, so an inconclusive error is raised.
    """
    if any(len(r.head) > 1 or r.has_equality() for r in rs.rules):
        raise DialectError("universal models are built for disjunction-free rules")
    ex = _executable(rs)
    result = chase(D, ex, depth, max_facts=max_facts)
    if not result.saturated:
        raise InconclusiveError(f"chase did not saturate within {depth} rounds")
    consts = sorted(D.adom(), key=lambda c: c.name)
    # m atoms can mention up to m * arity distinct variables (the all-fresh
    # query over one atom already needs a variable per position).
    max_vars = m * max(rs.query_schema.values(), default=1)
    kept: list[BCQ] = []
    for q in enumerate_bcqs(rs.query_schema, consts, m, max_vars):
        if nd_entails(result, q):
            kept.append(q)
    parts = [freeze_bcq(q) for q in kept]
    return c_disjoint_union(parts, shared=D.adom())
