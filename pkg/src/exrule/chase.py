"""The nondeterministic chase for disjunctive existential rules.

A *nondeterministic fact* is a finite disjunction of ground atoms, kept as
a canonically sorted tuple.  A database embeds as singleton facts; each
rule application on facts F_1..F_n matched by a substitution h produces

    res(F, rule, h)  =  h'(head)  union  U_i (F_i minus {h(body_i)})

where h' extends h by sending each existential variable v to the labeled
null determined by the triple (rule label, h(frontier), v).  Because null
identity is structural, the chase is a deterministic function of its
inputs: rounds are set unions, independent of enumeration order.

Round k of the chase is the union of round k-1 with every rule-application
result against round k-1; `saturated` is set when a round adds nothing.
For disjunction-free rules the procedure degenerates into the classic
oblivious skolem chase (every fact stays a singleton).

Entailment of a union of conjunctive queries from a nondeterministic
instance treats each fact as a clause: the query must hold in every model.
Since queries are monotone it is enough to check the models obtained by
picking one disjunct per fact, which `nd_entails` does with early exits
and superset pruning.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import CapExceeded, DialectError, HomomorphismError
from .model import (
    Atom, BCQ, Const, Instance, Null, Term, UCQ, Var,
    entails_ucq, hom_search, is_c_homomorphism,
)
from .rules import Dependency, Dialect, RuleSet, classify

__all__ = [
    "NondetFact", "NondetInstance", "Entailment", "CertainAnswer",
    "apply_rule", "chase", "chase_rounds", "skolem_chase", "skolem_chase_rounds",
    "nd_entails", "certain_answer", "brute_force_certain",
    "brute_force_certain_with_equality", "lift_homomorphism",
    "match_conjunction", "skolem_null", "instantiate_tgd_head",
    "DEFAULT_MAX_FACTS", "DEFAULT_MAX_MODELS",
]

DEFAULT_MAX_FACTS = 10 ** 6
DEFAULT_MAX_MODELS = 10 ** 5


# ---------------------------------------------------------------------------
# Facts and instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NondetFact:
    """A nonempty disjunction of ground atoms, order-normalized."""

    atoms: tuple[Atom, ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("a nondeterministic fact needs at least one atom")
        normalized = tuple(sorted(set(self.atoms), key=Atom.sort_key))
        object.__setattr__(self, "atoms", normalized)

    @staticmethod
    def of(atoms: Iterable[Atom]) -> "NondetFact":
        return NondetFact(tuple(atoms))

    @staticmethod
    def singleton(atom: Atom) -> "NondetFact":
        return NondetFact((atom,))

    def is_singleton(self) -> bool:
        return len(self.atoms) == 1

    def atom_set(self) -> frozenset[Atom]:
        return frozenset(self.atoms)

    def sort_key(self):
        return (len(self.atoms), tuple(a.sort_key() for a in self.atoms))

    def __str__(self) -> str:
        return " v ".join(str(a) for a in self.atoms)


@dataclass(frozen=True)
class NondetInstance:
    facts: frozenset[NondetFact]
    round: int = 0
    saturated: bool = False

    @staticmethod
    def from_database(D: Instance) -> "NondetInstance":
        return NondetInstance(frozenset(NondetFact.singleton(a) for a in D.atoms))

    def atoms(self) -> set[Atom]:
        out: set[Atom] = set()
        for f in self.facts:
            out.update(f.atoms)
        return out

    def sorted(self) -> tuple[NondetFact, ...]:
        return tuple(sorted(self.facts, key=NondetFact.sort_key))

    def all_singletons(self) -> bool:
        return all(f.is_singleton() for f in self.facts)

    def __len__(self) -> int:
        return len(self.facts)

    def __contains__(self, fact: NondetFact) -> bool:
        return fact in self.facts


# ---------------------------------------------------------------------------
# Body matching
# ---------------------------------------------------------------------------

def match_conjunction(body: Sequence[Atom], atoms: Iterable[Atom],
                      base: Optional[Mapping[Var, Term]] = None) -> Iterator[dict[Var, Term]]:
    """All substitutions h with h(body_i) in `atoms` for every i.

    Yields complete substitutions over the body's variables (extending
    `base` if given).  Deterministic order.
    """
    by_rel: dict[str, list[Atom]] = {}
    for a in atoms:
        by_rel.setdefault(a.rel, []).append(a)
    for lst in by_rel.values():
        lst.sort(key=Atom.sort_key)

    body = list(body)
    subst: dict[Var, Term] = dict(base or {})

    def extend(i: int) -> Iterator[dict[Var, Term]]:
        if i == len(body):
            yield dict(subst)
            return
        pattern = body[i]
        for cand in by_rel.get(pattern.rel, ()):
            if len(cand.args) != len(pattern.args):
                continue
            added: list[Var] = []
            ok = True
            for p_t, c_t in zip(pattern.args, cand.args):
                if isinstance(p_t, Var):
                    bound = subst.get(p_t)
                    if bound is None:
                        subst[p_t] = c_t
                        added.append(p_t)
                    elif bound != c_t:
                        ok = False
                        break
                elif p_t != c_t:
                    ok = False
                    break
            if ok:
                yield from extend(i + 1)
            for v in added:
                del subst[v]

    return extend(0)


def skolem_null(rule: Dependency, h: Mapping[Var, Term], var: Var) -> Null:
    frontier_image = tuple(h[v] for v in rule.frontier())
    return Null.skolem(rule.label, frontier_image, var.name)


def _require_canonical_dtgd(rule: Dependency) -> None:
    if rule.has_equality():
        raise DialectError(f"rule {rule.label} has an equality head; translate it first")
    if not rule.is_canonical():
        raise DialectError(f"rule {rule.label} is not canonical (multi-atom disjunct)")


def _skolem_extension(rule: Dependency, h: Mapping[Var, Term]) -> dict[Term, Term]:
    h2: dict[Term, Term] = dict(h)
    for v in rule.existential_vars():
        h2[v] = skolem_null(rule, h, v)
    return h2


def _head_instantiation(rule: Dependency, h: dict[Var, Term]) -> list[Atom]:
    """One ground atom per head disjunct (canonical), existentials skolemized."""
    h2 = _skolem_extension(rule, h)
    return [d[0].substitute(h2) for d in rule.head]  # type: ignore[index]


def instantiate_tgd_head(rule: Dependency, h: Mapping[Var, Term]) -> list[Atom]:
    """All atoms of a single-disjunct (possibly conjunctive) head."""
    if len(rule.head) != 1:
        raise DialectError(f"rule {rule.label} has a disjunctive head")
    h2 = _skolem_extension(rule, h)
    return [a.substitute(h2) for a in rule.head[0] if isinstance(a, Atom)]


# ---------------------------------------------------------------------------
# Rule application and the chase proper
# ---------------------------------------------------------------------------

def _atom_locations(I: NondetInstance) -> dict[Atom, list[NondetFact]]:
    locations: dict[Atom, list[NondetFact]] = {}
    for f in I.sorted():
        for a in f.atoms:
            locations.setdefault(a, []).append(f)
    return locations


def _rule_results(locations: dict[Atom, list[NondetFact]],
                  rule: Dependency) -> Iterator[NondetFact]:
    for h in match_conjunction(rule.body, locations.keys()):
        head_atoms = _head_instantiation(rule, h)
        matched = [rule.body[i].substitute(h) for i in range(len(rule.body))]
        pools = [locations[m] for m in matched]
        for choice in itertools.product(*pools):
            atoms = set(head_atoms)
            for fact, hit in zip(choice, matched):
                atoms.update(a for a in fact.atoms if a != hit)
            yield NondetFact.of(atoms)


def _apply_rule_indexed(locations: dict[Atom, list[NondetFact]],
                        rule: Dependency, max_results: int) -> set[NondetFact]:
    results: set[NondetFact] = set()
    for fact in _rule_results(locations, rule):
        results.add(fact)
        if len(results) > max_results:
            raise CapExceeded("rule application results", max_results)
    return results


def apply_rule(I: NondetInstance, rule: Dependency,
               max_results: int = DEFAULT_MAX_FACTS) -> set[NondetFact]:
    """All results of applying one canonical disjunctive rule to I."""
    _require_canonical_dtgd(rule)
    return _apply_rule_indexed(_atom_locations(I), rule, max_results)


def chase_rounds(D: Instance, rules: RuleSet, depth: int,
                 max_facts: int = DEFAULT_MAX_FACTS,
                 threads: int = 1) -> Iterator[NondetInstance]:
    """Yield chase rounds 0..depth, stopping early once saturated.

    Saturation is a property of the round that is already a fixpoint, so
    one lookahead round is computed to label it: if round k+1 would add
    nothing, round k is yielded with `saturated` set and iteration stops.

    With threads > 1 the per-rule applications of a round run on a thread
    pool; structural null naming makes the union identical either way.
    """
    if rules.dialect() > Dialect.DTGD:
        raise DialectError("the chase runs on equality-free rules only")
    if not rules.is_canonical():
        raise DialectError("the chase needs canonical rules; call canonicalize first")

    for rule in rules.rules:
        _require_canonical_dtgd(rule)

    def step(inst: NondetInstance) -> frozenset[NondetFact]:
        new_facts = set(inst.facts)
        locations = _atom_locations(inst)
        if threads > 1 and len(rules.rules) > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for result in pool.map(
                        lambda r: _apply_rule_indexed(locations, r, max_facts),
                        rules.rules):
                    new_facts |= result
        else:
            for rule in rules.rules:
                new_facts |= _apply_rule_indexed(locations, rule, max_facts)
        if len(new_facts) > max_facts:
            raise CapExceeded("facts", max_facts)
        return frozenset(new_facts)

    def is_fixpoint(inst: NondetInstance) -> bool:
        locations = _atom_locations(inst)
        for rule in rules.rules:
            for fact in _rule_results(locations, rule):
                if fact not in inst.facts:
                    return False
        return True

    current = NondetInstance.from_database(D)
    for k in range(1, depth + 1):
        new_facts = step(current)
        if new_facts == current.facts:
            yield NondetInstance(current.facts, current.round, True)
            return
        yield current
        current = NondetInstance(new_facts, k, False)
    yield NondetInstance(current.facts, current.round, is_fixpoint(current))


def chase(D: Instance, rules: RuleSet, depth: int,
          max_facts: int = DEFAULT_MAX_FACTS, threads: int = 1) -> NondetInstance:
    last = NondetInstance.from_database(D)
    for last in chase_rounds(D, rules, depth, max_facts, threads):
        pass
    return last


def skolem_chase_rounds(D: Instance, rules: RuleSet, depth: int,
                        max_facts: int = DEFAULT_MAX_FACTS) -> Iterator[Instance]:
    """Oblivious skolem chase for disjunction-free rule sets.

    Heads may be conjunctive (one disjunct, several atoms); all head atoms
    of an application share the same skolem nulls.
    """
    if any(len(r.head) > 1 for r in rules.rules):
        raise DialectError("skolem chase requires disjunction-free rules")
    if rules.dialect() == Dialect.DED:
        raise DialectError("skolem chase needs equality-free rules")

    atoms = set(D.atoms)
    yield Instance(frozenset(atoms))
    for _ in range(1, depth + 1):
        new_atoms = set(atoms)
        for rule in rules.rules:
            for h in match_conjunction(rule.body, atoms):
                new_atoms.update(instantiate_tgd_head(rule, h))
        if len(new_atoms) > max_facts:
            raise CapExceeded("atoms", max_facts)
        if new_atoms == atoms:
            return
        atoms = new_atoms
        yield Instance(frozenset(atoms))


def skolem_chase(D: Instance, rules: RuleSet, depth: int,
                 max_facts: int = DEFAULT_MAX_FACTS) -> Instance:
    last = D
    for last in skolem_chase_rounds(D, rules, depth, max_facts):
        pass
    return last


# ---------------------------------------------------------------------------
# Entailment from a nondeterministic instance
# ---------------------------------------------------------------------------

def nd_entails(I: NondetInstance | Iterable[NondetFact], q: UCQ | BCQ,
               max_models: int = DEFAULT_MAX_MODELS) -> bool:
    """True iff every model of the facts (read as clauses) satisfies q.

    Explores one-disjunct-per-fact choices depth-first; a fact that is a
    superset of another is redundant and dropped up front, a branch whose
    atoms already entail q is not expanded (queries are monotone), and the
    first falsifying model ends the search.
    """
    facts = set(I.facts if isinstance(I, NondetInstance) else I)
    singles: set[Atom] = set()
    disjunctive: list[frozenset[Atom]] = []
    for f in facts:
        if f.is_singleton():
            singles.add(f.atoms[0])
        else:
            disjunctive.append(f.atom_set())
    # Forced atoms are in every model; facts they hit are redundant, as is
    # any fact that is a superset of another.
    disjunctive = [s for s in set(disjunctive) if not s & singles]
    disjunctive = [s for s in disjunctive
                   if not any(o < s for o in disjunctive)]
    disjunctive.sort(key=lambda s: (len(s), sorted(a.sort_key() for a in s)))

    budget = [max_models]
    base = frozenset(singles)

    def explore(idx: int, atoms: frozenset[Atom]) -> bool:
        budget[0] -= 1
        if budget[0] < 0:
            raise CapExceeded("models", max_models)
        while idx < len(disjunctive) and disjunctive[idx] & atoms:
            idx += 1
        if entails_ucq(Instance(atoms), q):
            return True
        if idx == len(disjunctive):
            return False  # a complete falsifying model
        nxt = sorted(disjunctive[idx], key=Atom.sort_key)
        return all(explore(idx + 1, atoms | {a}) for a in nxt)

    return explore(0, base)


class Entailment(enum.Enum):
    ENTAILED = "ENTAILED"
    NOT_ENTAILED = "NOT_ENTAILED"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class CertainAnswer:
    status: Entailment
    round: Optional[int] = None
    saturated: bool = False

    def __bool__(self) -> bool:
        return self.status is Entailment.ENTAILED


def certain_answer(D: Instance, rules: RuleSet, q: UCQ | BCQ, depth: int,
                   max_facts: int = DEFAULT_MAX_FACTS,
                   max_models: int = DEFAULT_MAX_MODELS) -> CertainAnswer:
    """Decide D + rules |= q by chasing up to `depth` rounds.

    ENTAILED comes with the first witnessing round; NOT_ENTAILED needs the
    chase to saturate within the bound; otherwise UNKNOWN (the problem is
    only semi-decidable, so the bound is part of the contract).
    """
    for inst in chase_rounds(D, rules, depth, max_facts):
        if nd_entails(inst, q, max_models):
            return CertainAnswer(Entailment.ENTAILED, inst.round, inst.saturated)
        if inst.saturated:
            return CertainAnswer(Entailment.NOT_ENTAILED, inst.round, True)
    return CertainAnswer(Entailment.UNKNOWN, None, False)


# ---------------------------------------------------------------------------
# Brute-force oracles (independent of the chase machinery)
# ---------------------------------------------------------------------------

def _ground_rules(rules: RuleSet, constants: Sequence[Const]):
    """Ground clauses (body_atoms, head_relational, head_equalities)."""
    clauses = []
    for rule in rules.rules:
        if rule.existential_vars():
            raise DialectError(
                f"rule {rule.label} has existential variables; grounding is infinite")
        variables = sorted(rule.universal_vars(), key=lambda v: v.name)
        for combo in itertools.product(constants, repeat=len(variables)):
            h: dict[Term, Term] = dict(zip(variables, combo))
            body = frozenset(a.substitute(h) for a in rule.body)
            rel_heads: list[Atom] = []
            eq_heads: list[tuple[Term, Term]] = []
            for d in rule.head:
                atom = d[0]
                if isinstance(atom, Atom):
                    rel_heads.append(atom.substitute(h))
                else:
                    eq_heads.append((h.get(atom.left, atom.left),
                                     h.get(atom.right, atom.right)))
            clauses.append((body, tuple(rel_heads), tuple(eq_heads)))
    return clauses


def _all_models_entail(base: frozenset[Atom], clauses, q: UCQ | BCQ,
                       max_models: int) -> bool:
    """Every model extending `base` by repairing violated clauses satisfies q.

    Branching on the head atoms of violated clauses reaches a subset of
    every model; queries are monotone, so checking the reached models is
    equivalent to checking all of them.
    """
    budget = [max_models]

    def run(model: frozenset[Atom]) -> bool:
        budget[0] -= 1
        if budget[0] < 0:
            raise CapExceeded("models", max_models)
        for body, heads in clauses:
            if body <= model and not any(g in model for g in heads):
                if not heads:
                    return True  # contradictory branch: no models down here
                return all(run(model | {g}) for g in heads)
        return entails_ucq(Instance(model), q)

    return run(base)


def _herbrand_constants(D: Instance, rules: RuleSet, q: UCQ | BCQ) -> list[Const]:
    out = set(D.adom())
    for r in rules.rules:
        out |= r.constants()
    out |= q.constants()
    return sorted(out, key=lambda c: c.name)


def brute_force_certain(D: Instance, rules: RuleSet, q: UCQ | BCQ,
                        max_models: int = DEFAULT_MAX_MODELS) -> bool:
    """Certain answers for existential-free disjunctive rules, by model
    enumeration over the Herbrand base.  Independent of the chase."""
    if rules.dialect() > Dialect.DTGD:
        raise DialectError("equality requires the equality-aware oracle")
    if not rules.is_canonical():
        raise DialectError("oracle expects canonical rules")
    constants = _herbrand_constants(D, rules, q)
    grounded = [(body, heads) for body, heads, _ in _ground_rules(rules, constants)]
    return _all_models_entail(D.atoms, grounded, q, max_models)


def _partitions(items: Sequence[Const]) -> Iterator[list[list[Const]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def brute_force_certain_with_equality(D: Instance, rules: RuleSet, q: UCQ | BCQ,
                                      max_models: int = DEFAULT_MAX_MODELS) -> bool:
    """First-order certain answers for existential-free rules with equality
    heads: enumerate every identification (partition) of the constants,
    then every Herbrand model of the quotient.  Complete because universal
    sentences survive substructures and positive queries survive extensions.
    """
    constants = _herbrand_constants(D, rules, q)
    for partition in _partitions(constants):
        rep: dict[Term, Term] = {}
        for block in partition:
            block_rep = min(block, key=lambda c: c.name)
            for c in block:
                rep[c] = block_rep
        qD = frozenset(a.substitute(rep) for a in D.atoms)
        quotient_consts = sorted({rep[c] for c in constants}, key=lambda c: c.name)
        clauses = []
        for body, heads, eqs in _ground_rules(rules, quotient_consts):
            # Rule constants must be quotiented too.
            body = frozenset(a.substitute(rep) for a in body)
            heads = tuple(a.substitute(rep) for a in heads)
            eqs = tuple((rep.get(l, l), rep.get(r, r)) for l, r in eqs)
            if any(left == right for left, right in eqs):
                continue  # an equality disjunct already true: clause satisfied
            clauses.append((body, heads))
        q_sub = _substitute_query(q, rep)
        if not _all_models_entail(qD, clauses, q_sub, max_models):
            return False
    return True


def _substitute_query(q: UCQ | BCQ, mapping: Mapping[Term, Term]) -> UCQ:
    disjuncts = q.disjuncts if isinstance(q, UCQ) else frozenset({q})
    return UCQ(frozenset(
        BCQ(frozenset(a.substitute(mapping) for a in d.atoms)) for d in disjuncts))


# ---------------------------------------------------------------------------
# Homomorphism lifting along the chase
# ---------------------------------------------------------------------------

def lift_homomorphism(D: Instance, D2: Instance, rules: RuleSet,
                      tau: Mapping[Term, Term], depth: int,
                      fixed: Iterable[Const] = (),
                      max_facts: int = DEFAULT_MAX_FACTS) -> dict[Term, Term]:
    """Extend a homomorphism D -> D2 to one between the two chases.

    The extension transports skolem nulls structurally: the null for
    (rule, args, v) maps to the null for (rule, tau'(args), v).  The result
    is verified to map every chased fact of D onto a chased fact of D2 up
    to the requested depth.
    """
    if not is_c_homomorphism(tau, D, D2, fixed):
        raise HomomorphismError("tau is not a homomorphism from D to D2")

    cache: dict[Term, Term] = dict(tau)

    def transport(t: Term) -> Term:
        got = cache.get(t)
        if got is not None:
            return got
        if isinstance(t, Null) and t.provenance is not None:
            rule_label, args, var = t.provenance
            image = Null.skolem(rule_label, tuple(transport(a) for a in args), var)
            cache[t] = image
            return image
        raise HomomorphismError(f"term {t} is outside the chase of D")

    left = chase(D, rules, depth, max_facts)
    right = chase(D2, rules, depth, max_facts)
    for fact in left.facts:
        image = NondetFact.of(a.substitute({t: transport(t) for t in a.args})
                              for a in fact.atoms)
        if image not in right:
            raise HomomorphismError(
                f"lifted mapping sends {fact} to {image}, absent from the target chase")
    return dict(cache)
