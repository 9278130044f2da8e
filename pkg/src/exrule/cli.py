"""Command-line front end.

Exit codes: 0 for success (including ENTAILED, NO_COUNTEREXAMPLE, accepted,
verified); 1 for negative outcomes (NOT_ENTAILED, COUNTEREXAMPLE, rejected);
2 for undecided outcomes (UNKNOWN, INCONCLUSIVE); 10 for usage errors, 11
for malformed inputs, 12 for resource-cap hits.

`--json` prints a run report: the command line, a digest of every input
file, the outcome, and resource counters.  Output artifacts are
deterministic given identical inputs and flags; timings appear only in the
report, never in artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Optional

from . import automata as au
from . import properties as props
from .chase import (
    DEFAULT_MAX_FACTS, DEFAULT_MAX_MODELS, Entailment, certain_answer,
    chase_rounds, skolem_chase_rounds,
)
from .errors import CapExceeded, ExruleError
from .parsing import (
    parse_database, parse_program, parse_query, pretty_program,
)
from .rules import canonicalize
from .translate import (
    ded_to_dtgd, dtgd_to_tgd, guided_chase_verify, script_from_json,
)
from .universe import Bounds

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_UNDECIDED = 2
EXIT_USAGE = 10
EXIT_INPUT = 11
EXIT_RESOURCE = 12


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _Run:
    """Collects report data for one invocation."""

    def __init__(self, argv: list[str], args: argparse.Namespace):
        self.argv = argv
        self.args = args
        self.inputs: dict[str, str] = {}
        self.counters: dict[str, object] = {}
        self.outcome = "unset"
        self.started = time.perf_counter()

    def read(self, path: str) -> str:
        data = Path(path).read_bytes()
        self.inputs[path] = hashlib.sha256(data).hexdigest()
        return data.decode("utf-8")

    def write(self, path: str, text: str) -> None:
        Path(path).write_text(text, encoding="utf-8")

    def write_json(self, path: str, payload) -> None:
        self.write(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")

    def report(self) -> dict:
        return {
            "format": "exrule/1",
            "command": self.argv,
            "inputs": self.inputs,
            "outcome": self.outcome,
            "counters": self.counters,
            "seed": getattr(self.args, "seed", None),
            "timings": {"wall_s": round(time.perf_counter() - self.started, 6)},
        }

    def finish(self, code: int, outcome: str, message: str = "") -> int:
        self.outcome = outcome
        if getattr(self.args, "json", False):
            print(json.dumps(self.report(), sort_keys=True))
        elif message:
            print(message)
        return code


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", action="store_true",
                   help="print a machine-readable run report")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for randomized workloads (recorded in the report)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for chase rounds")
    p.add_argument("--max-facts", type=int, default=DEFAULT_MAX_FACTS,
                   help="cap on chase facts before a resource error")
    p.add_argument("--max-models", type=int, default=DEFAULT_MAX_MODELS,
                   help="cap on enumerated models before a resource error")


def build_parser() -> _Parser:
    root = _Parser(prog="exrule", description=__doc__,
                   formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse, classify, optionally canonicalize")
    p.add_argument("--rules", required=True)
    p.add_argument("--canonicalize", action="store_true")
    p.add_argument("-o", "--out", help="write the (canonicalized) program here")
    _add_common(p)

    p = sub.add_parser("chase", help="run the chase to a round bound")
    p.add_argument("--rules", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--mode", choices=["nondet", "skolem"], default="nondet")
    p.add_argument("--out", help="write chase.json here")
    _add_common(p)

    p = sub.add_parser("entail", help="decide a certain answer")
    p.add_argument("--rules", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--depth", type=int, required=True)
    _add_common(p)

    p = sub.add_parser("translate", help="translate between rule dialects")
    p.add_argument("--from", dest="src", choices=["ded", "dtgd"], required=True)
    p.add_argument("--to", dest="dst", choices=["dtgd", "tgd"], required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--manifest", help="write the fresh-symbol manifest here")
    _add_common(p)

    p = sub.add_parser("verify-script", help="replay a firing script")
    p.add_argument("--rules", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--script", required=True)
    _add_common(p)

    nta = sub.add_parser("nta", help="tree-automaton pipelines")
    nta_sub = nta.add_subparsers(dest="nta_command", required=True)

    p = nta_sub.add_parser("compile", help="linear rules + single fact -> automaton")
    p.add_argument("--rules", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--max-children", type=int, default=2)
    p.add_argument("-o", "--out", required=True)
    _add_common(p)

    p = nta_sub.add_parser("accept", help="test a tree or query for acceptance")
    p.add_argument("--nta", required=True)
    p.add_argument("--tree")
    p.add_argument("--query")
    p.add_argument("--bound", type=int, default=3)
    _add_common(p)

    p = nta_sub.add_parser("invert", help="oblivious automaton -> linear rules")
    p.add_argument("--nta", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("-o", "--out", required=True)
    _add_common(p)

    p = nta_sub.add_parser("combine", help="join single-fact programs")
    p.add_argument("--pair", action="append", required=True,
                   metavar="DB:RULES", help="database/rules file pair")
    p.add_argument("--data", required=True, help="data schema, e.g. 'A/1,B/1'")
    p.add_argument("--query", required=True, help="query schema, e.g. 'E/2'")
    p.add_argument("-o", "--out", required=True)
    _add_common(p)

    p = sub.add_parser("check", help="bounded property checking")
    p.add_argument("--property", required=True,
                   choices=["query-constructivity", "db-hom-closure",
                            "const-subst-closure", "data-constructivity",
                            "universal-model"])
    p.add_argument("--rules", required=True)
    p.add_argument("--db", help="database (universal-model only)")
    p.add_argument("--bounds", default="consts=2,facts=2,qatoms=2,depth=4")
    p.add_argument("--m", type=int, default=2,
                   help="query size bound for universal-model")
    p.add_argument("--report", help="write the verdict report here")
    _add_common(p)

    return root


def _parse_schema_list(text: str) -> dict[str, int]:
    out: dict[str, int] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, arity = part.partition("/")
        out[name.strip()] = int(arity)
    return out


# ---------------------------------------------------------------------------
# Command bodies
# ---------------------------------------------------------------------------

def _cmd_parse(run: _Run) -> int:
    args = run.args
    rs = parse_program(run.read(args.rules))
    if args.canonicalize:
        rs = canonicalize(rs)
    run.counters["rules"] = len(rs.rules)
    run.counters["dialect"] = str(rs.dialect())
    if args.out:
        run.write(args.out, pretty_program(rs))
    return run.finish(EXIT_OK, "parsed",
                      f"{len(rs.rules)} rules, dialect {rs.dialect()}")


def _cmd_chase(run: _Run) -> int:
    args = run.args
    rs = canonicalize(parse_program(run.read(args.rules)))
    D = parse_database(run.read(args.db))
    if args.mode == "skolem":
        last = None
        for last in skolem_chase_rounds(D, rs, args.depth, args.max_facts):
            pass
        payload = {
            "format": "exrule/1",
            "mode": "skolem",
            "atoms": [str(a) for a in last.sorted()],
        }
        run.counters["atoms"] = len(last)
    else:
        last = None
        for last in chase_rounds(D, rs, args.depth, args.max_facts,
                                 threads=args.threads):
            pass
        payload = {
            "format": "exrule/1",
            "mode": "nondet",
            "round": last.round,
            "saturated": last.saturated,
            "facts": [[str(a) for a in f.atoms] for f in last.sorted()],
        }
        run.counters["facts"] = len(last.facts)
        run.counters["round"] = last.round
        run.counters["saturated"] = last.saturated
    if args.out:
        run.write_json(args.out, payload)
    return run.finish(EXIT_OK, "chased",
                      json.dumps(payload) if not args.out else f"wrote {args.out}")


def _cmd_entail(run: _Run) -> int:
    args = run.args
    rs = canonicalize(parse_program(run.read(args.rules)))
    D = parse_database(run.read(args.db))
    q = parse_query(run.read(args.query))
    res = certain_answer(D, rs, q, args.depth,
                         max_facts=args.max_facts, max_models=args.max_models)
    run.counters["round"] = res.round
    run.counters["saturated"] = res.saturated
    if res.status is Entailment.ENTAILED:
        return run.finish(EXIT_OK, "ENTAILED", f"ENTAILED at round {res.round}")
    if res.status is Entailment.NOT_ENTAILED:
        return run.finish(EXIT_NEGATIVE, "NOT_ENTAILED",
                          f"NOT_ENTAILED (saturated at round {res.round})")
    return run.finish(EXIT_UNDECIDED, "UNKNOWN",
                      f"UNKNOWN within {args.depth} rounds")


def _cmd_translate(run: _Run) -> int:
    args = run.args
    rs = canonicalize(parse_program(run.read(args.input)))
    if (args.src, args.dst) == ("ded", "dtgd"):
        out = ded_to_dtgd(rs)
    elif (args.src, args.dst) == ("dtgd", "tgd"):
        out = dtgd_to_tgd(rs)
    else:
        raise _UsageError(f"unsupported translation {args.src} -> {args.dst}")
    run.write(args.out, pretty_program(out.rules))
    if args.manifest:
        run.write_json(args.manifest, out.manifest())
    run.counters["rules"] = len(out.rules.rules)
    run.counters["fresh_symbols"] = len(out.fresh_symbols)
    return run.finish(EXIT_OK, "translated",
                      f"wrote {len(out.rules.rules)} rules to {args.out}")


def _cmd_verify_script(run: _Run) -> int:
    args = run.args
    rs = parse_program(run.read(args.rules), allow_reserved=True)
    D = parse_database(run.read(args.db), allow_reserved=True)
    script = script_from_json(json.loads(run.read(args.script)))
    result = guided_chase_verify(D, rs, script)
    run.counters["steps"] = len(script.steps)
    run.counters["derived_atoms"] = len(result.derived)
    run.counters["target_derived"] = result.target_derived
    if result.failed_step is not None:
        run.counters["failed_step"] = result.failed_step
        return run.finish(EXIT_NEGATIVE, "rejected",
                          f"step {result.failed_step} illegal: {result.detail}")
    if not result.target_derived:
        return run.finish(EXIT_NEGATIVE, "rejected",
                          f"target {script.target} not derived")
    return run.finish(EXIT_OK, "verified",
                      f"derived {script.target} in {len(script.steps)} steps")


def _cmd_nta(run: _Run) -> int:
    args = run.args
    if args.nta_command == "compile":
        rs = canonicalize(parse_program(run.read(args.rules)))
        D = parse_database(run.read(args.db))
        A = au.compile_linear_tgds(rs, D, max_children=args.max_children)
        run.write_json(args.out, au.nta_to_json(A))
        run.counters["states"] = len(A.states)
        run.counters["transitions"] = len(A.transitions)
        return run.finish(EXIT_OK, "compiled",
                          f"{len(A.states)} states, {len(A.transitions)} transitions")
    if args.nta_command == "accept":
        A = au.nta_from_json(json.loads(run.read(args.nta)))
        if bool(args.tree) == bool(args.query):
            raise _UsageError("give exactly one of --tree or --query")
        if args.tree:
            tree = au.tree_from_json(json.loads(run.read(args.tree)))
            ok = au.nta_accepts_tree(A, tree)
        else:
            q = parse_query(run.read(args.query))
            if len(q.disjuncts) != 1:
                raise _UsageError("acceptance takes a single conjunctive query")
            (bcq,) = q.disjuncts
            ok = au.nta_accepts_query(A, bcq, bound=args.bound)
            run.counters["bound"] = args.bound
        if ok:
            return run.finish(EXIT_OK, "accepted", "accepted")
        return run.finish(EXIT_NEGATIVE, "rejected",
                          "rejected (exact relative to the bound)")
    if args.nta_command == "invert":
        A = au.nta_from_json(json.loads(run.read(args.nta)))
        D = parse_database(run.read(args.db))
        rs = au.nta_to_linear_tgds(A, D)
        run.write(args.out, pretty_program(rs))
        run.counters["rules"] = len(rs.rules)
        return run.finish(EXIT_OK, "inverted",
                          f"wrote {len(rs.rules)} linear rules to {args.out}")
    if args.nta_command == "combine":
        pairs = []
        for spec_pair in args.pair:
            db_path, _, rules_path = spec_pair.partition(":")
            if not rules_path:
                raise _UsageError("--pair expects DB:RULES")
            D = parse_database(run.read(db_path))
            rs = parse_program(run.read(rules_path))
            pairs.append((D, rs))
        combined = au.combine_single_fact(pairs, _parse_schema_list(args.data),
                                          _parse_schema_list(args.query))
        run.write(args.out, pretty_program(combined))
        run.counters["rules"] = len(combined.rules)
        return run.finish(EXIT_OK, "combined",
                          f"wrote {len(combined.rules)} rules to {args.out}")
    raise _UsageError(f"unknown nta command {args.nta_command}")


def _cmd_check(run: _Run) -> int:
    args = run.args
    rs = parse_program(run.read(args.rules))
    bounds = Bounds.parse(args.bounds)
    if args.property == "universal-model":
        if not args.db:
            raise _UsageError("universal-model needs --db")
        D = parse_database(run.read(args.db))
        try:
            U = props.universal_model(D, rs, m=args.m, depth=bounds.depth,
                                      max_facts=args.max_facts)
        except props.InconclusiveError as err:
            return run.finish(EXIT_UNDECIDED, "INCONCLUSIVE", str(err))
        payload = {"format": "exrule/1", "atoms": [str(a) for a in U.sorted()]}
        if args.report:
            run.write_json(args.report, payload)
        run.counters["atoms"] = len(U)
        return run.finish(EXIT_OK, "built", f"universal model has {len(U)} atoms")

    checker = {
        "query-constructivity": props.check_query_constructivity,
        "db-hom-closure": props.check_db_hom_closure,
        "const-subst-closure": props.check_const_subst_closure,
        "data-constructivity": props.check_data_constructivity,
    }[args.property]
    verdict = checker(rs, bounds)
    if args.report:
        run.write_json(args.report, verdict.to_json())
    run.counters["checked"] = verdict.checked
    run.counters["undecided"] = verdict.undecided
    status = verdict.status
    if status is props.VerdictStatus.NO_COUNTEREXAMPLE:
        return run.finish(EXIT_OK, status.value, status.value)
    if status is props.VerdictStatus.COUNTEREXAMPLE:
        witness = {k: str(v) for k, v in (verdict.witness or {}).items()}
        run.counters["witness"] = witness
        return run.finish(EXIT_NEGATIVE, status.value,
                          f"{status.value}: {witness}")
    return run.finish(EXIT_UNDECIDED, status.value, status.value)


_COMMANDS = {
    "parse": _cmd_parse,
    "chase": _cmd_chase,
    "entail": _cmd_entail,
    "translate": _cmd_translate,
    "verify-script": _cmd_verify_script,
    "nta": _cmd_nta,
    "check": _cmd_check,
}


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    run = _Run(argv, args)
    try:
        return _COMMANDS[args.command](run)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except CapExceeded as err:
        print(f"resource error: {err}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ExruleError, OSError, json.JSONDecodeError) as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
