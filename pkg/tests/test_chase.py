import random

import pytest

from exrule.chase import (
    CertainAnswer, Entailment, NondetFact, NondetInstance,
    apply_rule, brute_force_certain, brute_force_certain_with_equality,
    certain_answer, chase, chase_rounds, lift_homomorphism, nd_entails,
    skolem_chase, skolem_chase_rounds,
)
from exrule.errors import DialectError, HomomorphismError
from exrule.model import Atom, BCQ, Const, Instance, Null, UCQ, Var
from exrule.parsing import parse_program, parse_query

a, b = Const("a"), Const("b")
X, Y = Var("X"), Var("Y")

DISJ = parse_program("@data: P/1\n@query: Q/1, R/1\nP(X) -> Q(X) | R(X).")
D_A = Instance.of([Atom("P", (a,))])


def fact(*atom_strs):
    return NondetFact.of(Atom(rel, tuple(Const(t) for t in args))
                         for rel, *args in atom_strs)


def test_apply_rule_produces_disjunctive_fact():
    I = NondetInstance.from_database(D_A)
    out = apply_rule(I, DISJ.rules[0])
    assert out == {fact(("Q", "a"), ("R", "a"))}


def test_apply_rule_res_keeps_unmatched_disjuncts():
    rs = parse_program("Q(X) -> S(X).")
    I = NondetInstance(frozenset({fact(("Q", "a"), ("R", "a"))}))
    out = apply_rule(I, rs.rules[0])
    assert out == {fact(("S", "a"), ("R", "a"))}


def test_apply_rule_skolem_naming_is_structural():
    rs = parse_program("P(X) -> E(X, Y).")
    I = NondetInstance.from_database(D_A)
    out1 = apply_rule(I, rs.rules[0])
    out2 = apply_rule(I, rs.rules[0])
    assert out1 == out2
    (f,) = out1
    (atom,) = f.atoms
    null = atom.args[1]
    assert isinstance(null, Null) and null.provenance == ("r0", (a,), "Y")


def test_apply_rule_rejects_noncanonical():
    rs = parse_program("P(X) -> Q(X), R(X).")
    with pytest.raises(DialectError):
        apply_rule(NondetInstance.from_database(D_A), rs.rules[0])


def test_chase_empty_program_saturates_immediately():
    result = chase(D_A, parse_program(""), depth=4)
    assert result.saturated and result.round == 0
    assert result.facts == NondetInstance.from_database(D_A).facts


def test_chase_collapses_disjunction_via_both_branches():
    rs = parse_program("P(X) -> Q(X) | R(X).\nQ(X) -> S(X).\nR(X) -> S(X).")
    result = chase(D_A, rs, depth=3)
    assert fact(("S", "a")) in result.facts
    assert brute_force_certain(D_A, rs, BCQ.of([Atom("S", (a,))]))


def test_chase_with_existentials_saturates():
    rs = parse_program("P(X) -> E(X, Y).\nE(X, Y) -> Q(Y).")
    result = chase(D_A, rs, depth=3)
    assert result.saturated
    singles = {f for f in result.facts if f.is_singleton()}
    assert len(singles) == len(result.facts)
    rels = {f.atoms[0].rel for f in result.facts}
    assert rels == {"P", "E", "Q"}


def test_chase_rounds_are_monotone():
    rs = parse_program("P(X) -> E(X, Y).\nE(X, Y) -> Q(Y).")
    prev = None
    for inst in chase_rounds(D_A, rs, 3):
        if prev is not None:
            assert prev.facts <= inst.facts
        prev = inst


def test_skolem_chase_single_step():
    rs = parse_program("P(X) -> E(X, Y).")
    out = skolem_chase(D_A, rs, depth=2)
    assert len(out) == 2
    assert {at.rel for at in out.atoms} == {"P", "E"}


def test_skolem_chase_rejects_disjunction():
    with pytest.raises(DialectError):
        skolem_chase(D_A, DISJ, depth=1)


def test_skolem_chase_empty_database():
    rs = parse_program("P(X) -> E(X, Y).")
    assert skolem_chase(Instance.empty(), rs, 2) == Instance.empty()
    gen = parse_program("true -> F(X).")
    assert len(skolem_chase(Instance.empty(), gen, 2)) == 1


def test_degeneracy_on_tgds():
    rs = parse_program("P(X) -> E(X, Y).\nE(X, Y) -> Q(Y).")
    for k in range(4):
        nd = chase(D_A, rs, k)
        sk = skolem_chase(D_A, rs, k)
        assert nd.all_singletons()
        assert {f.atoms[0] for f in nd.facts} == sk.atoms


def test_nd_entails_disjunction_but_not_disjuncts():
    I = NondetInstance(frozenset({fact(("Q", "a"), ("R", "a"))}))
    both = UCQ.of(BCQ.of([Atom("Q", (a,))]), BCQ.of([Atom("R", (a,))]))
    assert nd_entails(I, both)
    assert not nd_entails(I, BCQ.of([Atom("Q", (a,))]))
    assert not nd_entails(I, BCQ.of([Atom("R", (a,))]))


def test_nd_entails_singleton_fact():
    I = NondetInstance(frozenset({fact(("S", "a")), fact(("Q", "a"), ("R", "a"))}))
    assert nd_entails(I, BCQ.of([Atom("S", (a,))]))


def test_nd_entails_not_weakened_by_redundant_superset_fact():
    base = [fact(("Q", "a"), ("R", "a")), fact(("Q", "a"))]
    q = BCQ.of([Atom("Q", (a,))])
    assert nd_entails(NondetInstance(frozenset(base)), q)


def test_certain_answer_worked_example():
    q_or = parse_query("Q(a) ; R(a).")
    res = certain_answer(D_A, DISJ, q_or, depth=1)
    assert res.status is Entailment.ENTAILED and res.round == 1

    res_q = certain_answer(D_A, DISJ, parse_query("Q(a)."), depth=5)
    assert res_q.status is Entailment.NOT_ENTAILED
    assert res_q.round == 1 and res_q.saturated

    res_r = certain_answer(D_A, DISJ, parse_query("R(a)."), depth=5)
    assert res_r.status is Entailment.NOT_ENTAILED


def test_certain_answer_unknown_on_generating_cycle():
    rs = parse_program("A(X) -> E(X, Y).\nE(X, Y) -> A(Y).")
    D = Instance.of([Atom("A", (a,))])
    res = certain_answer(D, rs, parse_query("Z9(a)."), depth=3)
    assert res.status is Entailment.UNKNOWN


def test_brute_force_requires_existential_free():
    rs = parse_program("P(X) -> E(X, Y).")
    with pytest.raises(DialectError):
        brute_force_certain(D_A, rs, BCQ.of([Atom("E", (a, b))]))


def test_brute_force_empty_program():
    q = BCQ.of([Atom("Q", (a,))])
    assert not brute_force_certain(D_A, parse_program(""), q)
    assert brute_force_certain(D_A, parse_program(""), BCQ.of([Atom("P", (a,))]))


def test_equality_oracle_merges_constants():
    rs = parse_program("R(X, Y) -> X = Y.")
    D = Instance.of([Atom("R", (a, b)), Atom("P", (a,))])
    assert brute_force_certain_with_equality(D, rs, BCQ.of([Atom("P", (b,))]))
    assert not brute_force_certain_with_equality(
        D, parse_program(""), BCQ.of([Atom("P", (b,))]))


def test_lift_homomorphism_transports_skolems():
    rs = parse_program("P(X) -> E(X, Y).")
    D2 = Instance.of([Atom("P", (b,))])
    lifted = lift_homomorphism(D_A, D2, rs, {a: b}, depth=2)
    skolems = {t: img for t, img in lifted.items() if isinstance(t, Null)}
    assert len(skolems) == 1
    (src, img) = next(iter(skolems.items()))
    assert src.provenance == ("r0", (a,), "Y")
    assert img.provenance == ("r0", (b,), "Y")


def test_lift_homomorphism_identity():
    lifted = lift_homomorphism(D_A, D_A, DISJ, {a: a}, depth=2)
    assert all(k == v for k, v in lifted.items())


def test_lift_homomorphism_rejects_non_hom():
    D2 = Instance.of([Atom("Q", (b,))])
    with pytest.raises(HomomorphismError):
        lift_homomorphism(D_A, D2, DISJ, {a: b}, depth=1)


def _random_tgd_program(rng):
    rels = [("A", 1), ("B", 1), ("E", 2)]
    lines = []
    for i in range(rng.randint(1, 3)):
        brel, bar = rng.choice(rels)
        body_vars = [Var("X"), Var("Y")][:bar]
        hrel, har = rng.choice(rels)
        head_vars = []
        for j in range(har):
            head_vars.append(rng.choice(body_vars + [Var("Z")]))
        body = f"{brel}({', '.join(v.name for v in body_vars)})"
        head = f"{hrel}({', '.join(v.name for v in head_vars)})"
        lines.append(f"{body} -> {head}.")
    return parse_program("\n".join(lines))


def test_degeneracy_randomized():
    rng = random.Random(7)
    for _ in range(25):
        rs = _random_tgd_program(rng)
        atoms = [Atom("A", (a,)), Atom("E", (a, b)), Atom("B", (b,))]
        D = Instance.of(rng.sample(atoms, rng.randint(1, 3)))
        for k in range(4):
            nd = chase(D, rs, k, max_facts=5000)
            sk = skolem_chase(D, rs, k, max_facts=5000)
            assert nd.all_singletons()
            assert {f.atoms[0] for f in nd.facts} == sk.atoms
