import pytest

from exrule.chase import Entailment, certain_answer
from exrule.errors import InconclusiveError
from exrule.model import Atom, BCQ, Const, Instance, Var, entails_ucq
from exrule.parsing import parse_program, parse_query
from exrule.properties import (
    OntologyOracle, Verdict, VerdictStatus,
    check_const_subst_closure, check_data_constructivity,
    check_db_hom_closure, check_query_constructivity,
    is_inseparable, is_most_specific, is_prime,
    union_chase_equivalent, universal_model,
)
from exrule.universe import Bounds, enumerate_bcqs

a, b = Const("a"), Const("b")
X, Y = Var("X"), Var("Y")

DISJ = parse_program("@data: P/1\n@query: Q/1, R/1\nP(X) -> Q(X) | R(X).")
SMALL = Bounds(consts=2, facts=2, query_atoms=1, query_vars=1, depth=4)


def test_query_constructivity_counterexample_on_disjunctive_program():
    verdict = check_query_constructivity(DISJ, SMALL)
    assert verdict.status is VerdictStatus.COUNTEREXAMPLE
    D = verdict.witness["db"]
    p, q = verdict.witness["p"], verdict.witness["q"]
    # The witness replays.
    from exrule.model import UCQ
    both = certain_answer(D, DISJ, UCQ.of(p, q), SMALL.depth)
    assert both.status is Entailment.ENTAILED
    assert certain_answer(D, DISJ, p, SMALL.depth).status is Entailment.NOT_ENTAILED
    assert certain_answer(D, DISJ, q, SMALL.depth).status is Entailment.NOT_ENTAILED


def test_query_constructivity_clear_on_tgds():
    rs = parse_program("@data: P/1\n@query: Q/1, E/2\nP(X) -> Q(X).\nP(X) -> E(X, Y).")
    verdict = check_query_constructivity(rs, SMALL)
    assert verdict.status is VerdictStatus.NO_COUNTEREXAMPLE
    assert verdict.undecided == 0


def test_query_constructivity_empty_program():
    rs = parse_program("@data: P/1\n@query: Q/1\n")
    verdict = check_query_constructivity(rs, SMALL)
    assert verdict.status is VerdictStatus.NO_COUNTEREXAMPLE


def test_db_hom_closure_holds_for_disjunctive_rules():
    # Include a definite rule so some queries are certain and the closure
    # check is not vacuous.
    rs = parse_program(
        "@data: P/1\n@query: Q/1, R/1, S/1\n"
        "P(X) -> Q(X) | R(X).\nP(X) -> S(X).")
    verdict = check_db_hom_closure(rs, SMALL)
    assert verdict.status is VerdictStatus.NO_COUNTEREXAMPLE
    assert verdict.checked > 0


def test_const_subst_closure_holds_for_disjunctive_rules():
    rs = parse_program(
        "@data: P/1\n@query: Q/1, R/1, S/1\n"
        "P(X) -> Q(X) | R(X).\nP(X) -> S(X).")
    verdict = check_const_subst_closure(rs, SMALL)
    assert verdict.status is VerdictStatus.NO_COUNTEREXAMPLE
    assert verdict.checked > 0


def test_equality_program_needs_translation_for_closure():
    rs = parse_program("@data: R/2, P/1\n@query: Q/1\nR(X, Y) -> X = Y.\nP(X) -> Q(X).")
    verdict = check_const_subst_closure(rs, Bounds(consts=2, facts=2,
                                                   query_atoms=1, query_vars=1,
                                                   depth=6))
    assert verdict.status is VerdictStatus.NO_COUNTEREXAMPLE

    # A naive reading that keeps the equality head as an inert ordinary
    # relation is NOT closed under constant substitutions.
    naive = parse_program(
        "@data: R/2, P/1\n@query: Q/1, EqX/2\nR(X, Y) -> EqX(X, Y).\nP(X) -> Q(X).")
    # With D = {R(a,b), P(a)} and q = Q(b): under the true equality reading
    # a collapse of a and b entails Q(b); the naive reading never does, and
    # substituting b for a exposes the difference.
    D = Instance.of([Atom("R", (a, b)), Atom("P", (a,))])
    res = certain_answer(D, naive, parse_query("Q(b)."), 4)
    assert res.status is Entailment.NOT_ENTAILED
    from exrule.translate import ded_to_dtgd
    translated = ded_to_dtgd(rs)
    res2 = certain_answer(D, translated.rules, parse_query("Q(b)."), 6)
    assert res2.status is Entailment.ENTAILED


def test_inseparable_joined_chain():
    q = BCQ.of([Atom("E", (a, Y)), Atom("Q", (Y,))])
    assert is_inseparable(q)


def test_separable_disjoint_conjuncts():
    q = BCQ.of([Atom("E", (a, Y)), Atom("Q", (b,))])
    assert not is_inseparable(q)


def test_single_atom_query_is_inseparable():
    assert is_inseparable(BCQ.of([Atom("E", (X, Y))]))


def test_most_specific_and_prime():
    rs = parse_program("@data: P/1\n@query: E/2\nP(X) -> E(X, Y).")
    D = Instance.of([Atom("P", (a,))])
    oracle = OntologyOracle(D, rs, depth=4)
    open_q = BCQ.of([Atom("E", (X, Y))])
    anchored = BCQ.of([Atom("E", (a, Y))])
    assert not is_most_specific(open_q, oracle)   # X -> a stays entailed
    assert is_most_specific(anchored, oracle)     # Y -> a leaves the class
    assert is_prime(anchored, oracle)
    assert not is_prime(open_q, oracle)


def test_data_constructivity_linear_clear():
    rs = parse_program("@data: A/1\n@query: E/2\nA(X) -> E(X, Y).")
    verdict = check_data_constructivity(
        rs, Bounds(consts=2, facts=2, query_atoms=2, query_vars=2, depth=4))
    assert verdict.status is VerdictStatus.NO_COUNTEREXAMPLE
    assert verdict.undecided == 0


def test_data_constructivity_counterexample_on_join_rule():
    rs = parse_program("@data: A/1, B/1\n@query: C/1\nA(X), B(X) -> C(X).")
    verdict = check_data_constructivity(
        rs, Bounds(consts=1, facts=1, query_atoms=1, query_vars=1, depth=4))
    assert verdict.status is VerdictStatus.COUNTEREXAMPLE
    w = verdict.witness
    union = w["db"].union(w["db2"])
    assert certain_answer(union, rs, w["query"], 4).status is Entailment.ENTAILED
    assert certain_answer(w["db"], rs, w["query"], 4).status is Entailment.NOT_ENTAILED
    assert certain_answer(w["db2"], rs, w["query"], 4).status is Entailment.NOT_ENTAILED


def test_union_chase_two_way_homomorphism_linear():
    rs = parse_program("@data: A/1\n@query: E/2\nA(X) -> E(X, Y).\nE(X, Y) -> E(Y, X).")
    D = Instance.of([Atom("A", (a,))])
    D2 = Instance.of([Atom("A", (b,)), Atom("E", (a, b))])
    assert union_chase_equivalent(rs, D, D2, rounds=3)


def test_universal_model_one_step_program():
    rs = parse_program("@data: P/1\n@query: E/2\nP(X) -> E(X, Y).")
    D = Instance.of([Atom("P", (a,))])
    U = universal_model(D, rs, m=1)
    # Entailed one-atom queries: E(a, y) and the all-variable E(x, y); the
    # model is their constant-sharing disjoint union.
    assert len(U) == 2
    assert U.adom() == {a}
    assert len(U.nulls()) == 3


def test_universal_model_satisfies_exactly_the_entailed_queries():
    rs = parse_program("@data: P/1\n@query: E/2\nP(X) -> E(X, Y).")
    D = Instance.of([Atom("P", (a,))])
    m = 2
    U = universal_model(D, rs, m=m)
    for q in enumerate_bcqs(rs.query_schema, [a], m, m):
        want = certain_answer(D, rs, q, 4)
        assert want.status is not Entailment.UNKNOWN
        assert entails_ucq(U, q) == (want.status is Entailment.ENTAILED), str(q)


def test_universal_model_empty_class():
    rs = parse_program("@data: P/1\n@query: E/2\n")
    D = Instance.of([Atom("P", (a,))])
    assert universal_model(D, rs, m=1) == Instance.empty()


def test_universal_model_requires_saturation():
    rs = parse_program("@data: A/1\n@query: E/2\nA(X) -> E(X, Y).\nE(X, Y) -> A(Y).")
    D = Instance.of([Atom("A", (a,))])
    with pytest.raises(InconclusiveError):
        universal_model(D, rs, m=1, depth=3)
