"""exrule: a workbench for ontology-mediated query answering with existential rules."""

from .model import (
    Atom, BCQ, Const, Instance, Null, Term, UCQ, Var,
    c_disjoint_union, entails_ucq, freeze_bcq, hom_search,
)
from .rules import Dependency, Dialect, Equality, RuleSet, canonicalize, classify
from .parsing import (
    parse_database, parse_program, parse_query,
    pretty_database, pretty_program, pretty_query,
)
from .chase import (
    CertainAnswer, Entailment, NondetFact, NondetInstance,
    apply_rule, brute_force_certain, certain_answer, chase, lift_homomorphism,
    nd_entails, skolem_chase,
)

__version__ = "0.1.0"
