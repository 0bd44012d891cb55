"""Command-line front end: ``flowcredit attribute|validate|gen|oracle``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io
from .baselines import independent_shap, linear_ground_truth, owen_oracle
from .dot import TOP_K, emit_dot
from .errors import ConfigurationCapExceeded, FlowCreditError
from .flow import config_cap
from .graph import count_configurations, ensure_augmented
from .synthetic import RandomGraphConfig, gen_random_linear_graph, make_chain, make_diamond, make_or_game

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_attribute(args) -> int:
    opts = io.CaseOptions(
        method="mc" if args.mc is not None else "exact",
        samples=args.mc,
        seed=args.seed,
        check_axioms=args.check_axioms,
        dummy_scan=args.dummy_scan,
        n_jobs=args.jobs,
    )
    bundle = io.load_case(args.graph, args.fg, args.bg, opts)
    try:
        report = io.run_attribution(bundle)
    except ConfigurationCapExceeded as exc:
        print(f"error: {exc}; rerun with --mc N or raise FLOWCREDIT_CONFIG_CAP", file=sys.stderr)
        return EXIT_ERROR
    _write(io.report_to_json(report, show_super=args.show_super), args.out)
    if args.dot:
        g = ensure_augmented(bundle.graph)
        text = emit_dot(g, report.credit, top_k=args.top_k, hide_super=not args.show_super,
                        hide_noise=args.hide_noise)
        Path(args.dot).write_text(text, encoding="utf-8")
    if not report.passed:
        sys.stderr.write(_dump({"passed": False, "failures": report.failures()}))
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_validate(args) -> int:
    g = io.load_graph(args.graph)
    aug = ensure_augmented(g)
    n = count_configurations(aug)
    summary = {
        "valid": True,
        "nodes": len(g),
        "edges": len(g.edges),
        "sources": list(g.sources),
        "sink": g.sink,
        "configurations": n,
        "exact_feasible": n <= config_cap(),
    }
    _write(_dump(summary), None)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "random":
        g, sampler = gen_random_linear_graph(RandomGraphConfig(args.n, args.p, args.seed))
        bg, fg = sampler.take(2)  # first draw is the background, the second is explained
        bgs = [bg]
    elif args.kind == "chain":
        g, bg, fg = make_chain(args.length, args.delta)
        bgs = [bg]
    elif args.kind == "or":
        g, bg, fg = make_or_game()
        bgs = [bg]
    else:
        g, bg, fg = make_diamond(args.sink_expr)
        bgs = [bg]
    paths = io.write_case(args.out, g, fg, bgs)
    _write(_dump({k: (str(v) if not isinstance(v, list) else [str(p) for p in v])
                  for k, v in paths.items()}), None)
    return EXIT_OK


def cmd_oracle(args) -> int:
    g = io.load_graph(args.graph)
    fg = io.check_sample(g, io.load_sample(args.fg))
    bg = io.check_sample(g, io.load_sample(args.bg))
    if args.kind == "shapley":
        out = {"values": independent_shap(g, bg, fg)}
    elif args.kind == "owen":
        vals = owen_oracle(g, bg, fg)
        out = {"edges": [{"from": u, "to": v, "value": x} for (u, v), x in sorted(vals.items())]}
    else:
        gt = linear_ground_truth(g, bg, fg)
        out = {"direct": gt.direct, "indirect": gt.indirect}
    _write(_dump(out), None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowcredit",
                                description="Edge-level credit for model outputs on causal graphs.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("attribute", help="attribute f(fg) - f(bg) to graph edges")
    a.add_argument("--graph", required=True)
    a.add_argument("--fg", required=True)
    a.add_argument("--bg", required=True, action="append",
                   help="background sample; repeat to average over several")
    mode = a.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="enumerate every configuration (default)")
    mode.add_argument("--mc", type=int, metavar="N", help="sample N configurations")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", help="report path (default: stdout)")
    a.add_argument("--dot", help="also write a Graphviz diagram here")
    a.add_argument("--top-k", type=int, default=TOP_K)
    a.add_argument("--check-axioms", action="store_true",
                   help="check efficiency on every boundary and conservation at every node")
    a.add_argument("--dummy-scan", action="store_true",
                   help="certify dummy edges by brute force and require zero credit")
    a.add_argument("--show-super", action="store_true",
                   help="include the super-source edges in the report and diagram")
    a.add_argument("--hide-noise", action="store_true", help="leave noise nodes out of the diagram")
    a.add_argument("--jobs", type=int, default=1)
    a.set_defaults(func=cmd_attribute)

    v = sub.add_parser("validate", help="check a graph document")
    v.add_argument("--graph", required=True)
    v.set_defaults(func=cmd_validate)

    gen = sub.add_parser("gen", help="write a synthetic case")
    gen.add_argument("kind", choices=["random", "chain", "or", "diamond"])
    gen.add_argument("--out", required=True)
    gen.add_argument("--n", type=int, default=10)
    gen.add_argument("--p", type=float, default=0.5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--length", type=int, default=4)
    gen.add_argument("--delta", type=float, default=-1.82)
    gen.add_argument("--sink-expr", default="B + C")
    gen.set_defaults(func=cmd_gen)

    o = sub.add_parser("oracle", help="reference values for comparison")
    o.add_argument("kind", choices=["shapley", "owen", "linear"])
    o.add_argument("--graph", required=True)
    o.add_argument("--fg", required=True)
    o.add_argument("--bg", required=True)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FlowCreditError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
