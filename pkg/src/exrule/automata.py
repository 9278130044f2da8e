"""Bottom-up ranked tree automata over query-shaped alphabets.

Letters are pairs (term set, atom set with at most one atom); an input
symbol is a letter with an arity.  A tree representation of a Boolean
conjunctive query spreads the query's atoms over a tree whose labels
carry the terms in scope; encoding it over a fixed pool of 2k variables
(reusing names that fell out of scope) turns the infinitely many queries
into trees over a finite alphabet.

Two compilations connect automata and linear rules: a linear program plus
a single-fact database compiles to an oblivious automaton whose states are
atoms and whose transitions are gated by atomic entailment, and an
oblivious automaton converts back to linear rules that walk accepted
trees top-down.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

from .chase import match_conjunction
from .errors import AutomatonError, CapExceeded, DialectError
from .model import Atom, BCQ, Const, Instance, Null, Term, Var, instance_schema
from .rules import Dependency, Dialect, RuleSet, classify

__all__ = [
    "Letter", "Symbol", "Transition", "NTA", "TreeNode",
    "RepNode", "RepReport", "ACCEPT",
    "nta_accepts_tree", "validate_representation",
    "encode_representation", "decode_tree",
    "atomic_entailment", "compile_linear_tgds", "nta_accepts_query",
    "nta_to_linear_tgds", "combine_single_fact",
    "nta_to_json", "nta_from_json", "tree_to_json", "tree_from_json",
]

ACCEPT = "$accept"

State = Union[Atom, str]


@dataclass(frozen=True)
class Letter:
    terms: frozenset[Term]
    atom: Optional[Atom] = None

    def __post_init__(self):
        if not isinstance(self.terms, frozenset):
            object.__setattr__(self, "terms", frozenset(self.terms))

    def sort_key(self):
        terms = tuple(sorted(t.sort_key() for t in self.terms))
        return (self.atom is not None,
                self.atom.sort_key() if self.atom else (), terms)

    def __str__(self) -> str:
        ts = ",".join(sorted(t.name for t in self.terms))
        return f"({{{ts}}}|{self.atom if self.atom else ''})"


Symbol = tuple[Letter, int]


@dataclass(frozen=True)
class Transition:
    letter: Letter
    children: tuple[State, ...]
    result: State

    @property
    def arity(self) -> int:
        return len(self.children)

    @property
    def symbol(self) -> Symbol:
        return (self.letter, len(self.children))


@dataclass(frozen=True)
class TreeNode:
    """A ranked tree: the symbol arity must equal the child count."""

    letter: Letter
    children: tuple["TreeNode", ...] = ()

    def __post_init__(self):
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))

    @property
    def symbol(self) -> Symbol:
        return (self.letter, len(self.children))

    def nodes(self) -> Iterator["TreeNode"]:
        yield self
        for c in self.children:
            yield from c.nodes()

    def expression(self) -> str:
        if not self.children:
            return str(self.letter)
        return f"{self.letter}({', '.join(c.expression() for c in self.children)})"


@dataclass
class NTA:
    states: frozenset
    finals: frozenset
    alphabet: frozenset  # of Symbol
    transitions: frozenset  # of Transition
    _index: dict = field(default=None, repr=False, compare=False)  # type: ignore

    def __post_init__(self):
        if not self.finals <= self.states:
            raise AutomatonError("final states must be states")
        for t in self.transitions:
            if t.symbol not in self.alphabet:
                raise AutomatonError(f"transition uses unknown symbol {t.symbol}")

    def index(self) -> dict[Symbol, dict[tuple, set]]:
        if self._index is None:
            idx: dict[Symbol, dict[tuple, set]] = {}
            for t in self.transitions:
                idx.setdefault(t.symbol, {}).setdefault(t.children, set()).add(t.result)
            self._index = idx
        return self._index

    def is_oblivious(self) -> bool:
        by_letter: dict[Letter, set] = {}
        for t in self.transitions:
            by_letter.setdefault(t.letter, set()).add(t.result)
        return all(len(results) == 1 for results in by_letter.values())

    def empty_letters(self) -> list[Letter]:
        letters = {sym[0] for sym in self.alphabet}
        return sorted((l for l in letters if l.atom is None), key=Letter.sort_key)

    def atom_letters(self) -> list[Letter]:
        letters = {sym[0] for sym in self.alphabet}
        return sorted((l for l in letters if l.atom is not None), key=Letter.sort_key)

    def arities_of(self, letter: Letter) -> list[int]:
        return sorted(m for (l, m) in self.alphabet if l == letter)


# ---------------------------------------------------------------------------
# Acceptance
# ---------------------------------------------------------------------------

def nta_accepts_tree(A: NTA, tree: TreeNode, want_run: bool = False):
    """Bottom-up dynamic programming over per-node state sets.

    Equivalent to the rewriting-run definition of acceptance: a run exists
    ending in a final state at the root iff the root's state set meets the
    final set.  With `want_run` a witnessing rewriting sequence (leaf to
    root, post-order) is returned alongside the verdict.
    """
    idx = A.index()

    def states_of(node: TreeNode) -> set:
        if node.symbol not in A.alphabet:
            raise AutomatonError(f"symbol {node.symbol} not in the alphabet")
        child_sets = [states_of(c) for c in node.children]
        out: set = set()
        table = idx.get(node.symbol, {})
        for children, results in table.items():
            if all(s in cs for s, cs in zip(children, child_sets)):
                out |= results
        return out

    if not want_run:
        try:
            return bool(states_of(tree) & A.finals)
        except AutomatonError:
            raise

    # Recompute with memo to extract one accepting assignment.
    memo: dict[int, set] = {}
    nodes: dict[int, TreeNode] = {}

    def fill(node: TreeNode) -> set:
        nodes[id(node)] = node
        child_sets = [fill(c) for c in node.children]
        out: set = set()
        for children, results in idx.get(node.symbol, {}).items():
            if all(s in cs for s, cs in zip(children, child_sets)):
                out |= results
        memo[id(node)] = out
        return out

    root_states = fill(tree)
    accepted = bool(root_states & A.finals)
    if not accepted:
        return False, []

    choice: dict[int, State] = {}

    def pick(node: TreeNode, state: State) -> None:
        choice[id(node)] = state
        for children, results in sorted(idx.get(node.symbol, {}).items(),
                                        key=lambda kv: repr(kv[0])):
            if state in results and all(
                    s in memo[id(c)] for s, c in zip(children, node.children)):
                for s, c in zip(children, node.children):
                    pick(c, s)
                return

    root_state = sorted(root_states & A.finals, key=repr)[0]
    pick(tree, root_state)

    # Emit the rewriting sequence: wrap nodes post-order.
    order: list[TreeNode] = []

    def postorder(node: TreeNode) -> None:
        for c in node.children:
            postorder(c)
        order.append(node)

    postorder(tree)
    wrapped: set[int] = set()

    def render(node: TreeNode) -> str:
        inner = (f"{node.letter}({', '.join(render(c) for c in node.children)})"
                 if node.children else str(node.letter))
        if id(node) in wrapped:
            return f"{choice[id(node)]}[{inner}]"
        return inner

    run = [render(tree)]
    for node in order:
        wrapped.add(id(node))
        run.append(render(tree))
    return True, run


# ---------------------------------------------------------------------------
# Tree representations of queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RepNode:
    terms: frozenset[Term]
    atoms: frozenset[Atom]
    children: tuple["RepNode", ...] = ()

    def __post_init__(self):
        if not isinstance(self.terms, frozenset):
            object.__setattr__(self, "terms", frozenset(self.terms))
        if not isinstance(self.atoms, frozenset):
            object.__setattr__(self, "atoms", frozenset(self.atoms))
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))

    def nodes(self) -> Iterator["RepNode"]:
        yield self
        for c in self.children:
            yield from c.nodes()


@dataclass
class RepReport:
    valid: bool
    violations: list[str]
    width: int
    linear: bool


def validate_representation(root: RepNode, q: BCQ) -> RepReport:
    """Check the three representation conditions and report width/linearity."""
    violations: list[str] = []
    nodes = list(root.nodes())

    covered: set[Atom] = set()
    for n in nodes:
        covered |= n.atoms
        for a in n.atoms:
            if not set(a.args) <= n.terms:
                violations.append(f"terms of {a} missing from its node label")
    if covered != set(q.atoms):
        violations.append("node atoms do not cover the query exactly")

    # Connectivity per term over the undirected tree.
    parent: dict[int, Optional[RepNode]] = {id(root): None}
    for n in nodes:
        for c in n.children:
            parent[id(c)] = n
    all_terms = set().union(*(n.terms for n in nodes)) if nodes else set()
    for t in sorted(all_terms, key=lambda x: x.sort_key()):
        holders = [n for n in nodes if t in n.terms]
        if len(holders) <= 1:
            continue
        ids = {id(n) for n in holders}
        reached = {id(holders[0])}
        frontier = [holders[0]]
        while frontier:
            n = frontier.pop()
            neighbours = list(n.children)
            p = parent[id(n)]
            if p is not None:
                neighbours.append(p)
            for nb in neighbours:
                if id(nb) in ids and id(nb) not in reached:
                    reached.add(id(nb))
                    frontier.append(nb)
        if reached != ids:
            violations.append(f"nodes holding {t} are not connected")

    root_consts = {t for t in root.terms if isinstance(t, Const)}
    for n in nodes:
        consts = {t for t in n.terms if isinstance(t, Const)}
        if not consts <= root_consts:
            violations.append(f"constants {sorted(c.name for c in consts - root_consts)} "
                              "missing from the root label")
            break

    width = max((len(n.terms) for n in nodes), default=0)
    linear = all(len(n.atoms) <= 1 for n in nodes)
    return RepReport(not violations, violations, width, linear)


def _pool(k: int) -> list[Var]:
    return [Var(f"x{i}") for i in range(1, 2 * k + 1)]


def encode_representation(root: RepNode, k: int) -> TreeNode:
    """Rename a linear representation's variables into a fixed pool of 2k
    names.  Variables shared with the parent keep the parent's name; fresh
    ones take the smallest pool name not used in the parent's label, so a
    name freed higher up is reused.  Constants pass through unchanged."""
    pool = _pool(k)

    def encode(node: RepNode, parent_terms: frozenset[Term],
               parent_map: Mapping[Term, Var]) -> TreeNode:
        node_vars = sorted((t for t in node.terms if not isinstance(t, Const)),
                           key=lambda t: t.sort_key())
        mapping: dict[Term, Var] = {}
        for t in node_vars:
            if t in parent_terms and t in parent_map:
                mapping[t] = parent_map[t]
        parent_names = {v.name for v in parent_map.values()} | {
            t.name for t in parent_terms if isinstance(t, Const)}
        used_here = {v.name for v in mapping.values()}
        for t in node_vars:
            if t in mapping:
                continue
            for candidate in pool:
                if candidate.name in parent_names or candidate.name in used_here:
                    continue
                mapping[t] = candidate
                used_here.add(candidate.name)
                break
            else:
                raise AutomatonError(
                    f"variable pool of size {2 * k} exhausted; width exceeds {k}")
        new_terms = frozenset(
            mapping.get(t, t) for t in node.terms)
        atoms = {a.substitute(mapping) for a in node.atoms}
        if len(atoms) > 1:
            raise AutomatonError("encoding requires a linear representation")
        letter = Letter(new_terms, next(iter(atoms)) if atoms else None)
        children = tuple(encode(c, node.terms, mapping) for c in node.children)
        return TreeNode(letter, children)

    report_width = max(len(n.terms) for n in root.nodes())
    if report_width > 2 * k:
        raise AutomatonError(f"width {report_width} exceeds the 2k pool")
    return encode(root, frozenset(), {})


def decode_tree(tree: TreeNode) -> BCQ:
    """Invert the pool encoding up to variable renaming: a name shared with
    the parent label denotes the same variable, anything else is fresh."""
    counter = itertools.count()
    atoms: list[Atom] = []

    def walk(node: TreeNode, parent_terms: frozenset[Term],
             parent_map: Mapping[str, Var]) -> None:
        mapping: dict[str, Var] = {}
        parent_names = {t.name for t in parent_terms}
        for t in sorted(node.letter.terms, key=lambda x: x.sort_key()):
            if isinstance(t, Const):
                continue
            if t.name in parent_names and t.name in parent_map:
                mapping[t.name] = parent_map[t.name]
            else:
                mapping[t.name] = Var(f"y{next(counter)}")
        if node.letter.atom is not None:
            subst = {t: mapping[t.name] for t in node.letter.atom.args
                     if not isinstance(t, Const) and t.name in mapping}
            atoms.append(node.letter.atom.substitute(subst))
        for c in node.children:
            walk(c, node.letter.terms, mapping)

    walk(tree, frozenset(), {})
    if not atoms:
        raise AutomatonError("tree carries no atoms; nothing to decode")
    return BCQ(frozenset(atoms))


# ---------------------------------------------------------------------------
# Atomic entailment for linear rules
# ---------------------------------------------------------------------------

def _canonical_pattern(atom: Atom) -> Atom:
    mapping: dict[Term, Term] = {}
    fresh = itertools.count(1)
    args = []
    for t in atom.args:
        if isinstance(t, Null):
            if t not in mapping:
                mapping[t] = Null(f"_p{next(fresh)}")
            args.append(mapping[t])
        else:
            args.append(t)
    return Atom(atom.rel, tuple(args))


def atomic_entailment(alpha: Atom, rules: RuleSet, beta: Atom,
                      max_patterns: int = 50_000) -> bool:
    """Decide {alpha} + rules |= exists x. beta, where x are the variables
    of beta absent from alpha.

    Freezes alpha's variables to fresh constants and saturates the linear
    chase over atom patterns (nulls renamed canonically); each derived atom
    depends on a single parent, so the pattern space is finite and the
    saturation exact.
    """
    if rules.dialect() > Dialect.DTGD:
        raise DialectError("atomic entailment expects equality-free rules")
    for rule in rules.rules:
        if classify(rule) != Dialect.LINEAR or not rule.is_canonical():
            raise DialectError(f"rule {rule.label} is not a canonical linear rule")

    frozen: dict[Term, Term] = {
        v: Const(f"#frz_{v.name}")
        for v in set(alpha.args) if isinstance(v, Var)}
    start = _canonical_pattern(alpha.substitute(frozen))
    seen: set[Atom] = {start}
    queue = [start]
    while queue:
        current = queue.pop()
        for rule in rules.rules:
            for h in match_conjunction(rule.body, [current]):
                from .chase import _head_instantiation
                for produced in _head_instantiation(rule, h):
                    canon = _canonical_pattern(produced)
                    if canon not in seen:
                        if len(seen) >= max_patterns:
                            raise CapExceeded("patterns", max_patterns)
                        seen.add(canon)
                        queue.append(canon)

    goal = beta.substitute(frozen)
    goal_vars = [t for t in goal.args if isinstance(t, Var)]
    for pattern in seen:
        if pattern.rel != goal.rel or len(pattern.args) != len(goal.args):
            continue
        binding: dict[Term, Term] = {}
        ok = True
        for g, p in zip(goal.args, pattern.args):
            if isinstance(g, Var):
                if binding.setdefault(g, p) != p:
                    ok = False
                    break
            elif g != p:
                ok = False
                break
        if ok:
            return True
    return False


# ---------------------------------------------------------------------------
# Compiling linear rules to an oblivious automaton
# ---------------------------------------------------------------------------

def compile_linear_tgds(rules: RuleSet, D: Instance,
                        max_children: int = 2) -> NTA:
    """Compile a canonical linear program plus a single-fact database into
    an oblivious automaton that accepts exactly the entailed queries.

    States are the atoms over the database's constants and a 2k variable
    pool (k the maximum arity) plus one final state.  A letter either
    presents a query atom, pads an atom with its index variables, or marks
    the root.  Transitions allow below any atom-state exactly the atoms it
    atomically entails.  Child counts are materialized up to
    `max_children`; the construction itself has no such bound, so raise it
    for queries that branch more.
    """
    if len(D) != 1:
        raise AutomatonError("compilation needs a single-fact database")
    schema = dict(rules.schema())
    for rel, ar in instance_schema(D).items():
        if schema.setdefault(rel, ar) != ar:
            raise AutomatonError(f"arity clash on {rel} between rules and database")
    if not schema:
        raise AutomatonError("empty schema")
    k = max(schema.values())
    if k == 0:
        k = 1
    pool = _pool(k)
    adom = sorted(D.adom(), key=lambda c: c.name)
    terms: list[Term] = list(adom) + pool

    atoms: list[Atom] = []
    for rel in sorted(schema):
        for combo in itertools.product(terms, repeat=schema[rel]):
            atoms.append(Atom(rel, combo))
    atoms.sort(key=Atom.sort_key)

    m = max(1, math.ceil(math.log2(len(atoms) + 2)))
    index_vars = [Var(f"v{i}") for i in range(1, m + 1)]

    def iota(i: int) -> frozenset[Var]:
        bits = i + 1
        return frozenset(index_vars[j] for j in range(m) if bits >> j & 1)

    query_rels = set(rules.query_schema) or {
        rel for rel in schema}  # default: everything may be queried

    form1: dict[Atom, Letter] = {}
    form2: dict[Atom, Letter] = {}
    for i, atom in enumerate(atoms):
        if atom.rel in query_rels:
            form1[atom] = Letter(frozenset(atom.args), atom)
        form2[atom] = Letter(frozenset(atom.args) | iota(i), None)
    root_letter = Letter(frozenset(adom) | frozenset(index_vars), None)

    (d_fact,) = D.atoms
    entailed: dict[Atom, list[Atom]] = {}
    for alpha in atoms:
        entailed[alpha] = [beta for beta in atoms
                           if atomic_entailment(alpha, rules, beta)]

    transitions: set[Transition] = set()
    alphabet: set[Symbol] = {(root_letter, 1)}
    transitions.add(Transition(root_letter, (d_fact,), ACCEPT))
    for alpha in atoms:
        letters = [form2[alpha]]
        if alpha in form1:
            letters.append(form1[alpha])
        for letter in letters:
            for arity in range(max_children + 1):
                alphabet.add((letter, arity))
                for combo in itertools.product(entailed[alpha], repeat=arity):
                    transitions.add(Transition(letter, combo, alpha))

    states = frozenset(atoms) | {ACCEPT}
    return NTA(states, frozenset({ACCEPT}), frozenset(alphabet),
               frozenset(transitions))


# ---------------------------------------------------------------------------
# Accepting a query: bounded search over encoded representations
# ---------------------------------------------------------------------------

def _rooted_trees(n: int) -> Iterator[list[Optional[int]]]:
    """Parent arrays over n nodes, root 0, parents of smaller index.

    Every rooted tree shape occurs (up to relabeling, which the caller's
    atom-placement permutations absorb), without the n^n blowup of
    arbitrary parent arrays.
    """
    if n == 1:
        yield [None]
        return
    for parents in itertools.product(*(range(i) for i in range(1, n))):
        yield [None] + list(parents)


def nta_accepts_query(A: NTA, q: BCQ, bound: int = 3,
                      budget: int = 200_000) -> bool:
    """Search for an accepted ranked tree representation of q with at most
    `bound` empty-letter nodes (the root included).

    The search enumerates tree shapes over the query's atoms plus padding
    nodes, assigns pool names canonically top-down, picks compatible
    empty letters, and runs acceptance.  A False answer is exact only
    relative to the bound, which mirrors how compiled automata arrange
    accepting trees along chase derivations.
    """
    alphabet_letters = {sym[0] for sym in A.alphabet}
    atom_letters_by_rel: dict[str, list[Letter]] = {}
    for letter in alphabet_letters:
        if letter.atom is not None:
            atom_letters_by_rel.setdefault(letter.atom.rel, []).append(letter)
    for letters in atom_letters_by_rel.values():
        letters.sort(key=Letter.sort_key)
    if any(a.rel not in atom_letters_by_rel for a in q.atoms):
        return False
    empty_letters = sorted((l for l in alphabet_letters if l.atom is None),
                           key=Letter.sort_key)

    q_atoms = q.sorted()
    n_atoms = len(q_atoms)
    constants = sorted(q.constants(), key=lambda c: c.name)
    # Query variables can only take names that occur inside atom letters.
    pool_names = sorted({t.name
                         for letters in atom_letters_by_rel.values()
                         for letter in letters
                         for t in letter.terms if isinstance(t, Var)})
    spent = [0]

    for n_aux in range(0, bound + 1):
        total = n_atoms + n_aux
        if total == 0:
            continue
        # Node roles: indices 0..n_aux-1 are padding, the rest carry atoms.
        for shape in _rooted_trees(total):
            children: dict[int, list[int]] = {i: [] for i in range(total)}
            for i, p in enumerate(shape):
                if p is not None:
                    children[p].append(i)
            for assignment in itertools.permutations(range(total), n_atoms):
                spent[0] += 1
                if spent[0] > budget:
                    raise CapExceeded("representation candidates", budget)
                atom_of = dict(zip(assignment, q_atoms))
                if _try_representation(A, q, shape, children, atom_of,
                                       constants, empty_letters,
                                       atom_letters_by_rel, pool_names,
                                       spent, budget):
                    return True
    return False


def _subtree_terms(node: int, children: dict[int, list[int]],
                   atom_of: dict[int, Atom]) -> set[Term]:
    out: set[Term] = set()
    if node in atom_of:
        out |= set(atom_of[node].args)
    for c in children[node]:
        out |= _subtree_terms(c, children, atom_of)
    return out


def _try_representation(A: NTA, q: BCQ, shape, children, atom_of, constants,
                        empty_letters, atom_letters_by_rel, pool_names,
                        spent, budget) -> bool:
    total = len(shape)
    root = 0
    idx = A.index()
    # Terms that must pass through each node for connectivity.
    below = {i: _subtree_terms(i, children, atom_of) for i in range(total)}
    all_terms: set[Term] = set()
    for a in atom_of.values():
        all_terms |= set(a.args)

    # A term belongs in a node's label when the node lies on a path between
    # two of its holders: it is local, or spans several child subtrees, or
    # occurs both below and outside.
    need: dict[int, set[Term]] = {}
    for i in range(total):
        outside = all_terms - below[i]
        local = set(atom_of[i].args) if i in atom_of else set()
        crossing = set(local)
        for t in below[i]:
            holders = sum(1 for c in children[i] if t in below[c]) + (t in local)
            if holders >= 2 or t in outside:
                crossing.add(t)
        need[i] = crossing

    # Atom nodes must carry every crossing term inside their own atom.
    for i in range(total):
        if i in atom_of and not need[i] <= set(atom_of[i].args):
            return False

    def candidates_for(node: int, parent_names: frozenset[str],
                       var_map: dict[Term, str]):
        """Letters usable at this node plus the node's name mapping."""
        local_terms = sorted(need[node], key=lambda t: t.sort_key())
        mapping: dict[Term, str] = {}
        used: set[str] = set()
        for t in local_terms:
            if not isinstance(t, Const) and t in var_map:
                mapping[t] = var_map[t]
                used.add(var_map[t])
        for t in local_terms:
            if isinstance(t, Const) or t in mapping:
                continue
            for name in pool_names:
                if name not in parent_names and name not in used:
                    mapping[t] = name
                    used.add(name)
                    break
            else:
                return [], mapping
        term_names = {mapping.get(t, t.name) if not isinstance(t, Const)
                      else t.name for t in local_terms}
        if node in atom_of:
            atom = atom_of[node]
            subst = {t: Var(mapping[t]) for t in atom.args if t in mapping}
            encoded = atom.substitute(subst)
            letters = [l for l in atom_letters_by_rel.get(atom.rel, ())
                       if l.atom == encoded]
        else:
            letters = [l for l in empty_letters
                       if term_names <= {t.name for t in l.terms}]
            if node == root:
                letters = [l for l in letters
                           if {c.name for c in constants}
                           <= {t.name for t in l.terms}]
        return letters, mapping

    def grow(node: int, parent_names: frozenset[str],
             var_map: dict[Term, str], allowed) -> Iterator[TreeNode]:
        """Yield candidate subtrees whose root state can lie in `allowed`
        (an over-approximation refined per child position; the final DP
        confirms joint consistency)."""
        spent[0] += 1
        if spent[0] > budget:
            raise CapExceeded("representation candidates", budget)
        kids = children[node]
        letters, mapping = candidates_for(node, parent_names, var_map)
        new_map = dict(var_map)
        new_map.update(mapping)
        for letter in letters:
            symbol = (letter, len(kids))
            if symbol not in A.alphabet:
                continue
            table = idx.get(symbol, {})
            entries = [(tup, res) for tup, results in table.items()
                       for res in results
                       if allowed is None or res in allowed]
            if not entries:
                continue
            if not kids:
                yield TreeNode(letter, ())
                continue
            child_allowed = []
            for i in range(len(kids)):
                child_allowed.append({tup[i] for tup, _ in entries})
            letter_names = frozenset(t.name for t in letter.terms)
            child_iters = [
                list(grow(c, letter_names, new_map, child_allowed[i]))
                for i, c in enumerate(kids)]
            if any(not ci for ci in child_iters):
                continue
            for combo in itertools.product(*child_iters):
                yield TreeNode(letter, tuple(combo))

    for tree in grow(root, frozenset(), {}, set(A.finals)):
        try:
            if nta_accepts_tree(A, tree):
                return True
        except AutomatonError:
            continue
    return False


# ---------------------------------------------------------------------------
# Inverting an oblivious automaton into linear rules
# ---------------------------------------------------------------------------

def _hat(term: Term) -> Term:
    if isinstance(term, Const):
        return Var(f"_vc_{term.name}")
    return term


def _letter_args(letter: Letter) -> tuple[Term, ...]:
    consts = sorted((t for t in letter.terms if isinstance(t, Const)),
                    key=lambda t: t.name)
    variables = sorted((t for t in letter.terms if not isinstance(t, Const)),
                       key=lambda t: t.name)
    return tuple(_hat(t) for t in consts) + tuple(variables)


def nta_to_linear_tgds(A: NTA, D: Instance,
                       data_schema: Optional[dict[str, int]] = None,
                       query_schema: Optional[dict[str, int]] = None) -> RuleSet:
    """Convert an oblivious automaton back into linear rules.

    One carrier relation per (state, letter) pair walks accepted trees top
    down: the database fact starts a walk at any final transition, each
    parent-child transition pair extends it, and atom letters emit their
    atom.  Constants are generalized to dedicated variables throughout.
    """
    if not A.is_oblivious():
        raise AutomatonError("inversion requires an oblivious automaton")
    if len(D) != 1:
        raise AutomatonError("inversion is defined for single-fact databases")
    (d_fact,) = D.atoms

    letters = sorted({sym[0] for sym in A.alphabet}, key=Letter.sort_key)
    states = sorted(A.states, key=repr)

    taken = set((data_schema or {})) | set((query_schema or {}))
    taken |= {d_fact.rel}
    if query_schema is None:
        query_schema = {}
        for letter in letters:
            if letter.atom is not None:
                query_schema[letter.atom.rel] = letter.atom.arity
    if data_schema is None:
        data_schema = dict(instance_schema(D))
        for rel in list(data_schema):
            if rel in query_schema:
                del data_schema[rel]

    t_name: dict[tuple, str] = {}
    counter = itertools.count()
    for s in states:
        for letter in letters:
            name = f"T{next(counter)}"
            while name in taken:
                name = f"T{next(counter)}"
            t_name[(s, letter)] = name

    def t_atom(state, letter: Letter, mapping: Optional[Mapping[Term, Term]] = None) -> Atom:
        args = _letter_args(letter)
        if mapping:
            args = tuple(mapping.get(a, a) for a in args)
        return Atom(t_name[(state, letter)], args)

    rules: list[Dependency] = []

    # Final transitions: the database fact opens a walk.
    seen_final: set[tuple] = set()
    hat_fact = Atom(d_fact.rel, tuple(_hat(t) for t in d_fact.args))
    for t in sorted(A.transitions, key=repr):
        if t.result not in A.finals:
            continue
        key = (t.result, t.letter)
        if key in seen_final:
            continue
        seen_final.add(key)
        rules.append(Dependency((hat_fact,), ((t_atom(t.result, t.letter),),),
                                f"open{len(rules)}"))

    # Parent-child pairs: result of one transition feeds another's children.
    feeds: set[tuple] = set()
    results: dict = {}
    for t in A.transitions:
        results.setdefault(t.result, set()).add(t.letter)
    for t in A.transitions:
        for child_state in set(t.children):
            for child_letter in results.get(child_state, ()):
                feeds.add((t.result, t.letter, child_state, child_letter))
    for (s2, l2, s1, l1) in sorted(feeds, key=repr):
        rules.append(Dependency((t_atom(s2, l2),), ((t_atom(s1, l1),),),
                                f"walk{len(rules)}"))

    # Atom letters emit their atom.
    for letter in letters:
        if letter.atom is None:
            continue
        hat_atom = Atom(letter.atom.rel,
                        tuple(_hat(t) for t in letter.atom.args))
        for s in states:
            rules.append(Dependency((t_atom(s, letter),), ((hat_atom,),),
                                    f"emit{len(rules)}"))

    return RuleSet(tuple(rules), data_schema, query_schema)


# ---------------------------------------------------------------------------
# Combining single-fact programs
# ---------------------------------------------------------------------------

def _fact_signature(D: Instance) -> tuple:
    (fact,) = D.atoms
    seen: dict[Term, int] = {}
    pattern = []
    for t in fact.args:
        pattern.append(seen.setdefault(t, len(seen)))
    return (fact.rel, tuple(pattern))


def combine_single_fact(compiled: Sequence[tuple[Instance, RuleSet]],
                        data_schema: dict[str, int],
                        query_schema: dict[str, int]) -> RuleSet:
    """Join per-single-fact-database programs into one program over the
    shared schemas: every branch gets private copies of all its relations,
    data relations fan out into each branch, query relations fan back in.
    """
    signatures = [_fact_signature(D) for D, _ in compiled]
    if len(set(signatures)) != len(signatures):
        raise AutomatonError("duplicate single-fact databases up to isomorphism")

    def renamed(rel: str, i: int) -> str:
        return f"{rel}_b{i}"

    rules: list[Dependency] = []
    for i, (_, branch) in enumerate(compiled):
        if branch.dialect() > Dialect.DTGD:
            raise DialectError("combination expects equality-free branch programs")
        mapping = {rel: renamed(rel, i) for rel in branch.schema()}

        def rename_atom(a: Atom) -> Atom:
            return Atom(mapping[a.rel], a.args)

        for rule in branch.rules:
            body = tuple(rename_atom(a) for a in rule.body)
            head = tuple(tuple(rename_atom(a) for a in d if isinstance(a, Atom))
                         for d in rule.head)
            rules.append(Dependency(body, head, f"b{i}_{rule.label}"))

    counter = itertools.count()
    for rel in sorted(data_schema):
        args = tuple(Var(f"X{j}") for j in range(data_schema[rel]))
        for i in range(len(compiled)):
            rules.append(Dependency((Atom(rel, args),),
                                    ((Atom(renamed(rel, i), args),),),
                                    f"fanout{next(counter)}"))
    for rel in sorted(query_schema):
        args = tuple(Var(f"X{j}") for j in range(query_schema[rel]))
        for i in range(len(compiled)):
            rules.append(Dependency((Atom(renamed(rel, i), args),),
                                    ((Atom(rel, args),),),
                                    f"fanin{next(counter)}"))
    return RuleSet(tuple(rules), dict(data_schema), dict(query_schema))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _term_to_json(t: Term) -> dict:
    if isinstance(t, Const):
        return {"const": t.name}
    if isinstance(t, Var):
        return {"var": t.name}
    return {"null": t.name}


def _term_from_json(d: dict) -> Term:
    if "const" in d:
        return Const(d["const"])
    if "var" in d:
        return Var(d["var"])
    return Null(d["null"])


def _atom_to_json(a: Atom) -> dict:
    return {"rel": a.rel, "args": [_term_to_json(t) for t in a.args]}


def _atom_from_json(d: dict) -> Atom:
    return Atom(d["rel"], tuple(_term_from_json(t) for t in d["args"]))


def _letter_to_json(l: Letter) -> dict:
    return {"terms": [_term_to_json(t) for t in sorted(l.terms, key=lambda x: x.sort_key())],
            "atom": _atom_to_json(l.atom) if l.atom else None}


def _letter_from_json(d: dict) -> Letter:
    atom = _atom_from_json(d["atom"]) if d.get("atom") else None
    return Letter(frozenset(_term_from_json(t) for t in d["terms"]), atom)


def _state_to_str(s: State) -> str:
    return str(s)


def nta_to_json(A: NTA) -> dict:
    letters = sorted({sym[0] for sym in A.alphabet}, key=Letter.sort_key)
    letter_index = {l: i for i, l in enumerate(letters)}
    alphabet = sorted(((letter_index[l], m) for (l, m) in A.alphabet))
    transitions = sorted(
        ({"letter": letter_index[t.letter],
          "children": [_state_to_str(s) for s in t.children],
          "result": _state_to_str(t.result)} for t in A.transitions),
        key=lambda d: (d["letter"], d["result"], d["children"]))
    return {
        "format": "exrule/1",
        "states": sorted(_state_to_str(s) for s in A.states),
        "finals": sorted(_state_to_str(s) for s in A.finals),
        "letters": [_letter_to_json(l) for l in letters],
        "alphabet": [{"letter": i, "arity": m} for (i, m) in alphabet],
        "transitions": transitions,
    }


def nta_from_json(data: dict) -> NTA:
    letters = [_letter_from_json(d) for d in data["letters"]]
    alphabet = frozenset((letters[e["letter"]], e["arity"])
                         for e in data["alphabet"])
    transitions = frozenset(
        Transition(letters[e["letter"]], tuple(e["children"]), e["result"])
        for e in data["transitions"])
    return NTA(frozenset(data["states"]), frozenset(data["finals"]),
               alphabet, transitions)


def tree_to_json(tree: TreeNode) -> dict:
    return {"letter": _letter_to_json(tree.letter),
            "children": [tree_to_json(c) for c in tree.children]}


def tree_from_json(data: dict) -> TreeNode:
    return TreeNode(_letter_from_json(data["letter"]),
                    tuple(tree_from_json(c) for c in data.get("children", ())))
