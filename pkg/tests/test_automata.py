import itertools
import random

import pytest

from exrule.automata import (
    ACCEPT, Letter, NTA, RepNode, Transition, TreeNode,
    atomic_entailment, combine_single_fact, compile_linear_tgds,
    decode_tree, encode_representation, nta_accepts_query, nta_accepts_tree,
    nta_from_json, nta_to_json, nta_to_linear_tgds, tree_from_json,
    tree_to_json, validate_representation,
)
from exrule.chase import Entailment, certain_answer, skolem_chase
from exrule.errors import AutomatonError, DialectError
from exrule.model import Atom, BCQ, Const, Instance, Var, entails_ucq, hom_search, freeze_bcq
from exrule.parsing import parse_program
from exrule.universe import enumerate_bcqs

a, b = Const("a"), Const("b")
x1, x2, x3, x4, x5 = (Var(f"x{i}") for i in range(1, 6))
X, Y, Z = Var("X"), Var("Y"), Var("Z")

LINEAR = parse_program("@data: A/1\n@query: E/2\nA(X) -> E(X, Y).")
D_A = Instance.of([Atom("A", (a,))])


# ---------------------------------------------------------------------------
# Acceptance mechanics
# ---------------------------------------------------------------------------

def _leaf_nta(final=True):
    w = Letter(frozenset({x1}), None)
    states = frozenset({"s"})
    finals = frozenset({"s"} if final else set())
    return NTA(states, finals, frozenset({(w, 0)}),
               frozenset({Transition(w, (), "s")})), w


def test_accepts_single_node():
    A, w = _leaf_nta(final=True)
    assert nta_accepts_tree(A, TreeNode(w))


def test_rejects_without_final():
    A, w = _leaf_nta(final=False)
    assert not nta_accepts_tree(A, TreeNode(w))


def test_two_node_chain_needs_both_transitions():
    leaf = Letter(frozenset({x1}), None)
    top = Letter(frozenset({x2}), None)
    tree = TreeNode(top, (TreeNode(leaf),))
    t_leaf = Transition(leaf, (), "p")
    t_top = Transition(top, ("p",), "q")
    for subset in itertools.chain.from_iterable(
            itertools.combinations([t_leaf, t_top], k) for k in range(3)):
        A = NTA(frozenset({"p", "q"}), frozenset({"q"}),
                frozenset({(leaf, 0), (top, 1)}), frozenset(subset))
        expected = set(subset) == {t_leaf, t_top}
        assert nta_accepts_tree(A, tree) == expected


def test_unknown_symbol_raises():
    A, w = _leaf_nta()
    stranger = Letter(frozenset({x3}), None)
    with pytest.raises(AutomatonError):
        nta_accepts_tree(A, TreeNode(stranger))


def test_run_emission_wraps_bottom_up():
    leaf = Letter(frozenset({x1}), None)
    top = Letter(frozenset({x2}), None)
    A = NTA(frozenset({"p", "q"}), frozenset({"q"}),
            frozenset({(leaf, 0), (top, 1)}),
            frozenset({Transition(leaf, (), "p"), Transition(top, ("p",), "q")}))
    ok, run = nta_accepts_tree(A, TreeNode(top, (TreeNode(leaf),)), want_run=True)
    assert ok
    assert len(run) == 3        # bare tree, leaf wrapped, root wrapped
    assert run[0].count("[") == 0
    assert run[1].count("[") == 1
    assert run[2].startswith("q[")


def _rewriting_accepts(A: NTA, tree: TreeNode) -> bool:
    """Exhaustive oracle following the expression-rewriting definition.

    A rewrite replaces one occurrence of letter(s1(t1),...,sk(tk)) -- the
    t_i being plain trees -- by s'(letter(t1,...,tk)); positions under a
    state wrapper are therefore not rewritable again.  Accept when some
    maximal sequence ends in final(whole tree).
    """
    def expr(node):
        return ("n", node.letter, tuple(expr(c) for c in node.children))

    def rewrites(e):
        if e[0] == "s":
            return
        _, letter, children = e
        if all(c[0] == "s" for c in children):
            states = tuple(c[1] for c in children)
            for t in A.transitions:
                if t.letter == letter and t.children == states:
                    bare = ("n", letter, tuple(c[2] for c in children))
                    yield ("s", t.result, bare)
        for i, c in enumerate(children):
            for rc in rewrites(c):
                yield ("n", letter, children[:i] + (rc,) + children[i + 1:])

    start = expr(tree)
    stack = [start]
    seen = {start}
    while stack:
        e = stack.pop()
        nxt = list(rewrites(e))
        if not nxt:
            if e[0] == "s" and e[1] in A.finals:
                return True
            continue
        for n in nxt:
            if n not in seen:
                seen.add(n)
                stack.append(n)
    return False


def test_dp_acceptance_matches_rewriting_runs_randomized():
    rng = random.Random(11)
    letters = [Letter(frozenset({x1}), None), Letter(frozenset({x2}), None)]
    states = ["s0", "s1", "s2"]
    for _ in range(40):
        alphabet = {(l, m) for l in letters for m in (0, 1, 2)}
        transitions = set()
        for _ in range(rng.randint(1, 6)):
            l = rng.choice(letters)
            m = rng.randint(0, 2)
            transitions.add(Transition(
                l, tuple(rng.choice(states) for _ in range(m)),
                rng.choice(states)))
        A = NTA(frozenset(states), frozenset({rng.choice(states)}),
                frozenset(alphabet), frozenset(transitions))

        def random_tree(depth):
            m = rng.randint(0, 2) if depth < 2 else 0
            return TreeNode(rng.choice(letters),
                            tuple(random_tree(depth + 1) for _ in range(m)))

        tree = random_tree(0)
        assert nta_accepts_tree(A, tree) == _rewriting_accepts(A, tree)


# ---------------------------------------------------------------------------
# Tree representations and the pool encoding
# ---------------------------------------------------------------------------

def test_single_node_representation_valid():
    q = BCQ.of([Atom("E", (a, Y))])
    node = RepNode(frozenset({a, Y}), frozenset(q.atoms))
    report = validate_representation(node, q)
    assert report.valid
    assert report.width == 2
    assert not report.linear or len(q.atoms) <= 1


def test_chain_representation_valid_and_linear():
    q = BCQ.of([Atom("E", (a, Y)), Atom("Q", (Y,))])
    child = RepNode(frozenset({Y}), frozenset({Atom("Q", (Y,))}))
    root = RepNode(frozenset({a, Y}), frozenset({Atom("E", (a, Y))}), (child,))
    report = validate_representation(root, q)
    assert report.valid and report.linear


def test_constant_outside_root_violates():
    q = BCQ.of([Atom("E", (a, Y)), Atom("Q", (b,))])
    child = RepNode(frozenset({b}), frozenset({Atom("Q", (b,))}))
    root = RepNode(frozenset({a, Y}), frozenset({Atom("E", (a, Y))}), (child,))
    report = validate_representation(root, q)
    assert not report.valid
    assert any("constants" in v for v in report.violations)


def test_disconnected_term_violates():
    q = BCQ.of([Atom("E", (Y, Z))])
    leaf = RepNode(frozenset({Y}), frozenset())
    mid = RepNode(frozenset({Z}), frozenset(), (leaf,))
    root = RepNode(frozenset({Y, Z}), frozenset(q.atoms), (mid,))
    report = validate_representation(root, q)
    assert not report.valid


def test_pool_reuse_matches_worked_example():
    # Three-node chain over x1..x5; the encoder reuses x1 at the grandchild.
    v3 = RepNode(frozenset({x3, x4, x5}), frozenset({Atom("T", (x5, x4, x5))}))
    v2 = RepNode(frozenset({x2, x3, x4}), frozenset({Atom("S", (x3, x4))}), (v3,))
    v1 = RepNode(frozenset({x1, x2, x3}), frozenset({Atom("R", (x1, x2, x3))}), (v2,))
    tree = encode_representation(v1, k=3)
    assert tree.letter.terms == frozenset({x1, x2, x3})
    child = tree.children[0]
    assert child.letter.terms == frozenset({x2, x3, x4})
    assert child.letter.atom == Atom("S", (x3, x4))
    grand = child.children[0]
    assert grand.letter.terms == frozenset({x3, x4, x1})
    assert grand.letter.atom == Atom("T", (x1, x4, x1))


def _random_linear_rep(rng, width):
    terms = [Var(f"t{i}") for i in range(6)] + [a]
    rels = [("P", 1), ("E", 2), ("T", 3)]

    def gen(depth, parent_terms):
        rel, ar = rng.choice(rels[:width])
        args = tuple(rng.choice(terms[:width + 2]) for _ in range(ar))
        atom = Atom(rel, args)
        label_terms = set(args) | set(rng.sample(list(parent_terms),
                                                 min(len(parent_terms), 1)))
        kids = tuple(gen(depth + 1, set(args))
                     for _ in range(rng.randint(0, 2) if depth < 2 else 0))
        return RepNode(frozenset(label_terms), frozenset({atom}), kids)

    return gen(0, set())


def test_encode_decode_round_trip_randomized():
    rng = random.Random(23)
    done = 0
    for _ in range(60):
        rep = _random_linear_rep(rng, width=3)
        q = BCQ(frozenset(at for n in rep.nodes() for at in n.atoms))
        if not validate_representation(rep, q).valid:
            continue
        tree = encode_representation(rep, k=3)
        q2 = decode_tree(tree)
        fixed = q.constants()
        assert hom_search(freeze_bcq(q), freeze_bcq(q2), fixed) is not None
        assert hom_search(freeze_bcq(q2), freeze_bcq(q), fixed) is not None
        done += 1
    assert done >= 10


def test_single_atom_query_single_node_tree():
    q = BCQ.of([Atom("P", (a,))])
    node = RepNode(frozenset({a}), frozenset(q.atoms))
    tree = encode_representation(node, k=1)
    assert tree.children == ()
    assert decode_tree(tree).atoms == q.atoms


# ---------------------------------------------------------------------------
# Atomic entailment
# ---------------------------------------------------------------------------

def test_atomic_entailment_one_step():
    assert atomic_entailment(Atom("A", (X,)), LINEAR, Atom("E", (X, Y)))


def test_atomic_entailment_rejects_diagonal():
    assert not atomic_entailment(Atom("A", (X,)), LINEAR, Atom("E", (X, X)))


def test_atomic_entailment_reflexive():
    assert atomic_entailment(Atom("A", (X,)), LINEAR, Atom("A", (X,)))


def test_atomic_entailment_requires_linear():
    rs = parse_program("A(X), B(X) -> C(X).")
    with pytest.raises(DialectError):
        atomic_entailment(Atom("A", (X,)), rs, Atom("C", (X,)))


def test_atomic_entailment_agrees_with_chase_randomized():
    rng = random.Random(5)
    rels = [("A", 1), ("B", 1), ("E", 2)]
    for _ in range(30):
        lines = []
        for _ in range(rng.randint(1, 3)):
            brel, bar = rng.choice(rels)
            hrel, har = rng.choice(rels)
            bvars = ["X", "Y"][:bar]
            hvars = [rng.choice(bvars + ["Z"]) for _ in range(har)]
            lines.append(f"{brel}({', '.join(bvars)}) -> {hrel}({', '.join(hvars)}).")
        rs = parse_program("\n".join(lines))
        alpha = Atom(*rng.choice([("A", (X,)), ("E", (X, Y))]))
        beta_rel, beta_ar = rng.choice(rels)
        beta = Atom(beta_rel, tuple(rng.choice([X, Y, Z, Var("W")])
                                    for _ in range(beta_ar)))
        # Oracle: freeze alpha, skolem-chase deep, check the frozen query.
        frozen = {v: Const(f"fz{v.name.lower()}") for v in alpha.terms()
                  if isinstance(v, Var)}
        D = Instance.of([alpha.substitute(frozen)])
        chased = skolem_chase(D, rs, depth=6)
        goal = BCQ.of([beta.substitute(frozen)])
        expect = entails_ucq(chased, goal)
        assert atomic_entailment(alpha, rs, beta) == expect


# ---------------------------------------------------------------------------
# Compilation, acceptance of queries, inversion, combination
# ---------------------------------------------------------------------------

def test_compiled_automaton_is_oblivious():
    A = compile_linear_tgds(LINEAR, D_A)
    assert A.is_oblivious()


def test_compiled_accepts_entailed_and_rejects_others():
    A = compile_linear_tgds(LINEAR, D_A)
    yes1 = BCQ.of([Atom("E", (a, Y))])
    yes2 = BCQ.of([Atom("E", (X, Y))])
    no1 = BCQ.of([Atom("E", (Y, a))])
    no2 = BCQ.of([Atom("E", (a, a))])
    assert nta_accepts_query(A, yes1, bound=2)
    assert nta_accepts_query(A, yes2, bound=2)
    assert not nta_accepts_query(A, no1, bound=2)
    assert not nta_accepts_query(A, no2, bound=2)


def test_compiled_matches_chase_on_small_queries():
    A = compile_linear_tgds(LINEAR, D_A)
    for q in enumerate_bcqs({"E": 2}, [a], max_atoms=2, max_vars=2):
        expected = certain_answer(D_A, LINEAR, q, depth=4)
        assert expected.status is not Entailment.UNKNOWN
        got = nta_accepts_query(A, q, bound=2)
        assert got == (expected.status is Entailment.ENTAILED), str(q)


def test_nta_json_round_trip():
    A = compile_linear_tgds(LINEAR, D_A)
    again = nta_from_json(nta_to_json(A))
    assert len(again.transitions) == len(A.transitions)
    assert again.is_oblivious()
    yes = BCQ.of([Atom("E", (a, Y))])
    assert nta_accepts_query(again, yes, bound=2)


def test_tree_json_round_trip():
    node = TreeNode(Letter(frozenset({a, x1}), Atom("E", (a, x1))), ())
    again = tree_from_json(tree_to_json(node))
    assert again == node


def test_inversion_round_trips_certain_answers():
    from exrule.chase import chase_rounds, nd_entails
    from exrule.rules import Dialect, classify
    A = compile_linear_tgds(LINEAR, D_A)
    back = nta_to_linear_tgds(A, D_A)
    assert all(classify(r) == Dialect.LINEAR for r in back.rules)
    # The inverted program walks trees with fresh nulls and never
    # saturates, so chase once and compare only decided verdicts.
    final = None
    for final in chase_rounds(D_A, back, 4, max_facts=100_000):
        pass
    decided = 0
    for q in enumerate_bcqs({"E": 2}, [a], max_atoms=2, max_vars=2):
        want = certain_answer(D_A, LINEAR, q, depth=4)
        assert want.status is not Entailment.UNKNOWN
        got_entailed = nd_entails(final, q)
        if want.status is Entailment.ENTAILED:
            assert got_entailed, str(q)
            decided += 1
        elif final.saturated:
            assert not got_entailed, str(q)
    assert decided >= 2


def test_inversion_empty_finals_entails_nothing():
    A = compile_linear_tgds(LINEAR, D_A)
    stripped = NTA(A.states, frozenset(), A.alphabet,
                   frozenset(t for t in A.transitions if t.result != ACCEPT))
    back = nta_to_linear_tgds(stripped, D_A)
    assert not [r for r in back.rules if r.label.startswith("open")]
    res = certain_answer(D_A, back, BCQ.of([Atom("E", (a, Y))]), depth=4)
    assert res.status is not Entailment.ENTAILED


def test_inversion_requires_oblivious():
    w = Letter(frozenset({x1}), None)
    A = NTA(frozenset({"s", "t"}), frozenset({"s"}),
            frozenset({(w, 0)}),
            frozenset({Transition(w, (), "s"), Transition(w, (), "t")}))
    with pytest.raises(AutomatonError):
        nta_to_linear_tgds(A, D_A)


def test_combination_respects_branches():
    rs1 = parse_program("@data: A/1\n@query: E/2\nA(X) -> E(X, Y).")
    rs2 = parse_program("@data: B/1\n@query: E/2\nB(X) -> E(X, X).")
    D1 = Instance.of([Atom("A", (a,))])
    D2 = Instance.of([Atom("B", (a,))])
    combined = combine_single_fact(
        [(D1, rs1), (D2, rs2)], {"A": 1, "B": 1}, {"E": 2})
    fanouts = [r for r in combined.rules if r.label.startswith("fanout")]
    assert len(fanouts) == 4  # two data relations times two branches
    res1 = certain_answer(D1, combined, BCQ.of([Atom("E", (a, Y))]), depth=4)
    assert res1.status is Entailment.ENTAILED
    res2 = certain_answer(D2, combined, BCQ.of([Atom("E", (a, a))]), depth=4)
    assert res2.status is Entailment.ENTAILED
    res3 = certain_answer(D1, combined, BCQ.of([Atom("E", (a, a))]), depth=4)
    assert res3.status is Entailment.NOT_ENTAILED
    both = Instance.of([Atom("A", (a,)), Atom("B", (b,))])
    res4 = certain_answer(both, combined, BCQ.of([Atom("E", (b, b))]), depth=4)
    assert res4.status is Entailment.ENTAILED


def test_combination_rejects_isomorphic_duplicates():
    rs = parse_program("@data: A/1\n@query: E/2\nA(X) -> E(X, Y).")
    D1 = Instance.of([Atom("A", (a,))])
    D2 = Instance.of([Atom("A", (b,))])
    with pytest.raises(AutomatonError):
        combine_single_fact([(D1, rs), (D2, rs)], {"A": 1}, {"E": 2})
