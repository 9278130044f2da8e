import pytest

from exrule.chase import (
    Entailment, brute_force_certain_with_equality, certain_answer, skolem_chase,
)
from exrule.errors import DialectError, ScriptError
from exrule.model import Atom, BCQ, Const, Instance, UCQ, Var
from exrule.parsing import parse_program, parse_query, pretty_program
from exrule.rules import Dialect, classify
from exrule.translate import (
    FiringScript, FiringStep, GuidedChase, build_entailment_script,
    ded_to_dtgd, dtgd_to_tgd, find_singleton_derivation, guided_chase_verify,
    script_from_json, script_to_json, translation_equivalence_suite,
)
from exrule.universe import Bounds

a, b = Const("a"), Const("b")

EQ_SOURCE = "@data: R/2, P/1\n@query: Q/1\nR(X, Y) -> X = Y.\nP(X) -> Q(X).\n"
FIXTURE = ("@data: P/1\n@query: Q/1, R/1, S/1\n"
           "P(X) -> Q(X) | R(X).\nQ(X) -> S(X).\nR(X) -> S(X).\n")


# ---------------------------------------------------------------------------
# Equality elimination
# ---------------------------------------------------------------------------

def test_ded_to_dtgd_structure():
    rs = parse_program(EQ_SOURCE)
    out = ded_to_dtgd(rs)
    assert out.rules.dialect() <= Dialect.DTGD
    assert out.rules.is_canonical()
    eq = [n for n, meta in out.fresh_symbols.items() if meta["arity"] == 2][0]
    dom = [n for n, meta in out.fresh_symbols.items() if meta["arity"] == 1][0]
    # Domain collection per position, three axioms, one congruence per symbol.
    assert len(out.groups["dom"]) == 2 + 1 + 1  # R/2 positions + P/1 + Q/1
    assert len(out.groups["eq-axioms"]) == 3
    assert len(out.groups["congruence"]) == 3
    assert len(out.groups["source"]) == 2
    schema = out.rules.schema()
    assert eq in schema and dom in schema


def test_ded_to_dtgd_equality_saturation_entails_merged_fact():
    rs = parse_program(EQ_SOURCE)
    out = ded_to_dtgd(rs)
    D = Instance.of([Atom("R", (a, b)), Atom("P", (a,))])
    res = certain_answer(D, out.rules, parse_query("Q(b)."), depth=6)
    assert res.status is Entailment.ENTAILED
    # And the oracle agrees with the first-order reading of the source.
    assert brute_force_certain_with_equality(D, rs, BCQ.of([Atom("Q", (b,))]))


def test_ded_to_dtgd_equality_free_source_is_preserved():
    rs = parse_program("@data: P/1\n@query: Q/1\nP(X) -> Q(X).")
    out = ded_to_dtgd(rs)
    src_strs = {str(r.body) + str(r.head) for r in rs.rules}
    out_strs = {str(r.body) + str(r.head) for r in out.rules.rules}
    assert src_strs <= out_strs


def test_ded_to_dtgd_empty_program_emits_axioms_for_declared():
    rs = parse_program("@data: P/1\n@query: Q/1\n")
    out = ded_to_dtgd(rs)
    assert len(out.groups["eq-axioms"]) == 3
    assert len(out.groups["dom"]) == 2
    assert not out.groups.get("source")


def test_ded_to_dtgd_exhaustive_agreement_small_universe():
    rs = parse_program(EQ_SOURCE)
    out = ded_to_dtgd(rs)
    report = translation_equivalence_suite(
        out, Bounds(consts=2, facts=2, query_atoms=1, query_vars=1,
                    disjuncts=2, depth=6))
    assert report.total > 0
    assert report.perfect
    assert report.unknown_masked == 0


def test_eq_relation_is_equivalence_on_saturated_chase():
    rs = parse_program(EQ_SOURCE)
    out = ded_to_dtgd(rs)
    eq = next(n for n, m in out.fresh_symbols.items() if m["arity"] == 2)
    dom = next(n for n, m in out.fresh_symbols.items() if m["arity"] == 1)
    D = Instance.of([Atom("R", (a, b)), Atom("P", (a,))])
    from exrule.chase import chase
    result = chase(D, out.rules, depth=8)
    assert result.saturated
    atoms = {x for f in result.facts for x in f.atoms}
    eq_pairs = {(x.args[0], x.args[1]) for x in atoms if x.rel == eq}
    domain = {x.args[0] for x in atoms if x.rel == dom}
    assert {(d, d) for d in domain} <= eq_pairs
    assert all((y, x) in eq_pairs for (x, y) in eq_pairs)
    for (x, y) in eq_pairs:
        for (y2, z) in eq_pairs:
            if y2 == y:
                assert (x, z) in eq_pairs


# ---------------------------------------------------------------------------
# Disjunction elimination: structure
# ---------------------------------------------------------------------------

def _fixture_translation():
    return dtgd_to_tgd(parse_program(FIXTURE))


def test_dtgd_to_tgd_rejects_bad_inputs():
    with pytest.raises(DialectError):
        dtgd_to_tgd(parse_program("@data: R/2\n@query: Q/1\nR(X, Y) -> X = Y."))
    with pytest.raises(DialectError):
        dtgd_to_tgd(parse_program("P(X) -> Q(X)."))  # schemas undeclared


def test_dtgd_to_tgd_output_is_pure_tgd():
    out = _fixture_translation()
    for rule in out.rules.rules:
        assert classify(rule) in (Dialect.TGD, Dialect.LINEAR)
        assert not rule.has_equality()
        assert len(rule.head) == 1


def test_dtgd_to_tgd_group_counts_match_construction():
    out = _fixture_translation()
    n_data, n_schema, n_query, n_rules = 1, 4, 3, 3
    expected = {
        "ground-terms": n_data,
        "flag-gen": n_schema,
        "pair-gen": 1,
        "disj-flag": 1,
        "conj-flag": 1,
        "merge": 2,
        "simulate": n_rules,
        "fire": n_rules,
        "init-true": n_data,
        "equiv-true": 1,
        "var-gen": 1,
        "var-next": 1,
        "conjoin-true": 1,
        "query-true": 1,
        "ren-var": 1,
        "ren-const": 1,
        "copy-out": n_query,
    }
    for group, count in expected.items():
        assert len(out.groups[group]) == count, group
    # Every non-source relation in any rule is covered by the manifest.
    source_schema = set(parse_program(FIXTURE).schema())
    used = set()
    for rule in out.rules.rules:
        used |= rule.relations()
    assert used - source_schema == set(out.fresh_symbols)


def test_dtgd_to_tgd_rule_sources_point_back():
    out = _fixture_translation()
    sim_sources = {out.rule_sources[lbl] for lbl in out.groups["simulate"]}
    assert sim_sources == {"r0", "r1", "r2"}


def test_manifest_round_trips_through_json():
    import json
    out = _fixture_translation()
    blob = json.dumps(out.manifest(), sort_keys=True)
    again = json.loads(blob)
    assert again["kind"] == "dtgd-to-tgd"
    assert set(again["groups"]) == set(out.groups)


# ---------------------------------------------------------------------------
# Disjunction elimination: unit semantics of generated groups
# ---------------------------------------------------------------------------

def test_pair_encoder_is_functional():
    out = _fixture_translation()
    nm = out.names
    seed = Instance.of([Atom(nm.num, (a,)), Atom(nm.num, (b,))])
    pair_rules = out.rules.with_rules(
        [out.rules.rule_by_label(lbl) for lbl in out.groups["pair-gen"]])
    result = skolem_chase(seed, pair_rules, depth=1)
    encs = [x for x in result.atoms if x.rel == nm.enc]
    by_pair = {}
    for x in encs:
        by_pair.setdefault((x.args[0], x.args[1]), set()).add(x.args[2])
    assert set(by_pair) == {(a, a), (a, b), (b, a), (b, b)}
    assert all(len(v) == 1 for v in by_pair.values())


def test_merge_rules_concatenate_lists():
    out = _fixture_translation()
    nm = out.names
    fd, w1, w2, x1, y1, z1 = (Const(n) for n in ("fd", "w1", "w2", "x1", "y1", "z1"))
    # Lists: x = [w1] rooted at fd; y = [w2]; expected merge = [w1, w2].
    seed = Instance.of([
        Atom(nm.flag_d, (fd,)),
        Atom(nm.nf, (x1,)),
        Atom(nm.enc, (fd, w2, y1)),   # y = [w2]
        Atom(nm.enc, (x1, w2, z1)),   # x extended by w2
    ])
    merge_rules = out.rules.with_rules(
        [out.rules.rule_by_label(lbl) for lbl in out.groups["merge"]])
    result = skolem_chase(seed, merge_rules, depth=3)
    mrg = {x.args for x in result.atoms if x.rel == nm.mrg}
    assert (x1, fd, x1) in mrg          # merging with the empty list
    assert (x1, y1, z1) in mrg          # appending w2


def test_init_rule_marks_exactly_database_encodings():
    out = _fixture_translation()
    nm = out.names
    f_p, e1, other = Const("fp"), Const("e1"), Const("zz")
    seed = Instance.of([
        Atom("P", (a,)),
        Atom(nm.flag["P"], (f_p,)),
        Atom(nm.enc, (f_p, a, e1)),
        Atom(nm.enc, (f_p, b, other)),  # encoding of P(b), which is not in D
    ])
    init_rules = out.rules.with_rules(
        [out.rules.rule_by_label(lbl) for lbl in out.groups["init-true"]])
    result = skolem_chase(seed, init_rules, depth=2)
    true_terms = {x.args[0] for x in result.atoms if x.rel == nm.true}
    assert true_terms == {e1}


def test_copy_rule_reproduces_hasq_reported_atoms():
    out = _fixture_translation()
    nm = out.names
    qenc = Const("qe")
    seed = Instance.of([
        Atom(nm.bcq, (qenc,)),
        Atom(nm.true, (qenc,)),
        Atom(nm.has["S"], (a, qenc)),
        Atom(nm.ren, (a, a, qenc)),
        Atom(nm.has["Q"], (b, qenc)),   # no renaming entry: must not copy
    ])
    copy_rules = out.rules.with_rules(
        [out.rules.rule_by_label(lbl) for lbl in out.groups["copy-out"]])
    result = skolem_chase(seed, copy_rules, depth=2)
    assert Atom("S", (a,)) in result.atoms
    assert Atom("Q", (b,)) not in result.atoms


# ---------------------------------------------------------------------------
# Guided chase and firing scripts
# ---------------------------------------------------------------------------

def test_guided_chase_empty_script_target_in_database():
    rs = parse_program("@data: P/1\n@query: Q/1\nP(X) -> Q(X).")
    D = Instance.of([Atom("P", (a,))])
    res = guided_chase_verify(D, rs, FiringScript((), Atom("P", (a,))))
    assert res and res.ok and res.target_derived


def test_guided_chase_rejects_underivable_step():
    rs = parse_program("@data: P/1\n@query: Q/1\nP(X) -> Q(X).")
    D = Instance.of([Atom("P", (a,))])
    script = FiringScript((FiringStep("r0", {"X": b}),), Atom("Q", (b,)))
    res = guided_chase_verify(D, rs, script)
    assert not res and res.failed_step == 0
    assert "Q(b)" in str(res.detail) or "P(b)" in str(res.detail)


def test_guided_chase_runs_legal_step():
    rs = parse_program("@data: P/1\n@query: Q/1\nP(X) -> Q(X).")
    D = Instance.of([Atom("P", (a,))])
    script = FiringScript((FiringStep("r0", {"X": a}),), Atom("Q", (a,)))
    res = guided_chase_verify(D, rs, script)
    assert res and res.target_derived


def test_find_singleton_derivation_collapse():
    rs = parse_program(FIXTURE)
    D = Instance.of([Atom("P", (a,))])
    derivation = find_singleton_derivation(D, rs, Atom("S", (a,)), depth=4)
    assert derivation is not None
    assert derivation[-1].produced.atoms == (Atom("S", (a,)),)
    labels = [app.rule.label for app in derivation]
    assert labels[0] == "r0"


def test_fixture_script_derives_target():
    out = _fixture_translation()
    D = Instance.of([Atom("P", (a,))])
    script = build_entailment_script(out, D, Atom("S", (a,)), depth=4)
    assert script is not None
    res = guided_chase_verify(D, out.rules, script)
    assert res.ok, res.detail
    assert res.target_derived
    assert Atom("S", (a,)) in res.derived.atoms


def test_fixture_script_round_trips_through_json():
    import json
    out = _fixture_translation()
    D = Instance.of([Atom("P", (a,))])
    script = build_entailment_script(out, D, Atom("S", (a,)), depth=4)
    blob = json.dumps(script_to_json(script))
    again = script_from_json(json.loads(blob))
    assert again.target == script.target
    assert len(again.steps) == len(script.steps)
    res = guided_chase_verify(D, out.rules, again)
    assert res.ok and res.target_derived


def test_script_for_underivable_target_is_none():
    out = _fixture_translation()
    D = Instance.of([Atom("P", (a,))])
    assert build_entailment_script(out, D, Atom("Q", (a,)), depth=4) is None


def test_suite_flags_ucq_as_out_of_contract():
    out = _fixture_translation()
    report = translation_equivalence_suite(
        out, Bounds(consts=1, facts=1, query_atoms=1, query_vars=0,
                    disjuncts=2, depth=4))
    assert report.out_of_contract > 0
    assert report.perfect
