import pytest

from exrule.errors import ParseError, SchemaError
from exrule.model import Atom, Const, Var
from exrule.parsing import parse_program, parse_query, pretty_program
from exrule.rules import Dependency, Dialect, Equality, RuleSet, canonicalize, classify

X, Y, Z = Var("X"), Var("Y"), Var("Z")


def test_parse_disjunctive_rule():
    rs = parse_program("P(X) -> Q(X) | R(X).")
    assert len(rs.rules) == 1
    rule = rs.rules[0]
    assert rule.body == (Atom("P", (X,)),)
    assert rule.head == ((Atom("Q", (X,)),), (Atom("R", (X,)),))
    assert classify(rule) == Dialect.DTGD


def test_parse_existential_rule():
    rs = parse_program("P(X) -> E(X, Y).")
    rule = rs.rules[0]
    assert rule.existential_vars() == {Y}
    assert classify(rule) == Dialect.LINEAR


def test_parse_equality_head_round_trips():
    text = "R(X, Y) -> X = Y."
    rs = parse_program(text)
    rule = rs.rules[0]
    assert rule.head == ((Equality(X, Y),),)
    assert classify(rule) == Dialect.DED
    again = parse_program(pretty_program(rs))
    assert again.rules == rs.rules


def test_parse_true_body_and_schemas():
    text = """%format exrule/1
@data: P/1
@query: Q/1, E/2
true -> E(X, Y).
P(X) -> Q(X).
"""
    rs = parse_program(text)
    assert rs.data_schema == {"P": 1}
    assert rs.query_schema == {"Q": 1, "E": 2}
    assert rs.rules[0].body == ()
    assert classify(rs.rules[0]) == Dialect.TGD  # empty body is not linear


def test_classify_linear_requires_single_body_atom():
    rs = parse_program("A(X), B(X) -> C(X).")
    assert classify(rs.rules[0]) == Dialect.TGD


def test_dialect_of_ruleset_is_max():
    rs = parse_program("A(X) -> B(X).\nP(X) -> Q(X) | R(X).")
    assert rs.dialect() == Dialect.DTGD


def test_arity_conflict_rejected():
    with pytest.raises(SchemaError):
        parse_program("P(X) -> Q(X).\nQ(X, Y) -> P(X).")


def test_overlapping_schemas_rejected():
    with pytest.raises(SchemaError):
        parse_program("@data: P/1\n@query: P/1\n")


def test_reserved_prefix_rejected_in_user_input():
    with pytest.raises(ParseError):
        parse_program("_aux0(X) -> Q(X).")
    parse_program("_aux0(X) -> Q(X).", allow_reserved=True)


def test_syntax_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_program("P(X) -> \nQ(X")
    assert err.value.line == 2


def test_canonicalize_splits_conjunctive_disjunct():
    rs = parse_program("P(X) -> Q(X), R(X) | S(X).")
    out = canonicalize(rs)
    assert out.is_canonical()
    assert len(out.rules) == 3
    main = out.rules[0]
    assert len(main.head) == 2
    aux_rel = main.head[0][0].rel
    assert aux_rel.startswith("_aux")
    projections = {str(r.head[0][0]) for r in out.rules[1:]}
    assert projections == {"Q(X)", "R(X)"}
    # Auxiliary symbols live in the working schema only.
    assert aux_rel in out.schema()
    assert aux_rel not in out.data_schema and aux_rel not in out.query_schema


def test_canonicalize_tgd_conjunctive_head_gives_three_tgds():
    rs = parse_program("P(X) -> Q(X), R(X).")
    out = canonicalize(rs)
    assert len(out.rules) == 3
    assert all(classify(r) <= Dialect.TGD for r in out.rules)


def test_canonicalize_preserves_linearity():
    rs = parse_program("P(X) -> E(X, Y), F(Y).")
    out = canonicalize(rs)
    assert all(classify(r) == Dialect.LINEAR for r in out.rules)


def test_canonicalize_fixpoint():
    rs = parse_program("P(X) -> Q(X) | R(X).")
    assert canonicalize(rs) is rs
    out = canonicalize(parse_program("P(X) -> Q(X), R(X)."))
    assert canonicalize(out) is out


def test_query_parsing():
    q = parse_query("E(X,Y), Q(Y) ; R(a).")
    assert len(q.disjuncts) == 2
    consts = q.constants()
    assert consts == {Const("a")}
