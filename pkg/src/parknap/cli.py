"""Command line entry point: ``parknap {run,brute,check,gen}``."""
import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .errors import ParknapError

log = logging.getLogger("parknap")


def _apply_overrides(spec, args):
    if args.seed is not None:
        spec.seeds = [args.seed]
    if args.out:
        spec.out = args.out
    if args.audit:
        spec.audit = True
    if args.timing:
        spec.timing = True
    for a in spec.algorithms:
        if not a["name"].startswith("par_"):
            continue
        if args.mode:
            a["mode"] = args.mode
        if args.variant:
            a["variant"] = args.variant
    return spec


def cmd_run(args):
    from .harness import ExperimentSpec, run_experiment

    spec = _apply_overrides(ExperimentSpec.load(args.spec), args)
    outcome = run_experiment(spec)
    print(f"wrote {outcome.csv_path} ({len(outcome.rows)} rows), {outcome.trajectory_path}, {outcome.sidecar_path}")
    for label, seed, v, report in outcome.failures:
        print(f"FAIL {label} seed={seed} sweep={v}")
        for c in report.failed():
            print(f"  {c.name}: {c.detail}")
    return 0 if outcome.ok else 1


def cmd_brute(args):
    from .harness import brute_force_opt, make_instance

    gen = {"path": args.graph} if args.graph else {}
    inst = make_instance(args.objective, args.n, args.seed, args.costs, args.budget_fraction, args.constraint,
                         args.k, gen)
    value, S = brute_force_opt(inst)
    print(json.dumps({"value": value, "set": list(S), "n": inst.n, "budget": inst.budget}))
    return 0


def cmd_check(args):
    from .checks import run_checks

    results = run_checks(seed=args.seed if args.seed is not None else 0, n=args.n, trials=args.trials,
                         mode=args.mode or "practical", variant=args.variant or "seq")
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_gen(args):
    from .instances import gen_erdos_renyi, save_graph_csv
    from .rng import stream

    seed = args.seed if args.seed is not None else 0
    if args.kind == "graph":
        g = gen_erdos_renyi(args.n, args.p, seed)
        save_graph_csv(g, args.out)
        print(f"wrote {args.out}: n={g.n} m={g.m}")
    else:
        rng = stream(seed, "instance", "tags")
        tags = rng.random((args.n, args.tags)) ** 4
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("movie_id,tag_id,score\n")
            for i, j in zip(*np.nonzero(tags > 1e-3)):
                fh.write(f"{i},{j},{tags[i, j]:.6f}\n")
        print(f"wrote {args.out}: {args.n} movies x {args.tags} tags")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="parknap", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=("theoretical", "practical"))
    common.add_argument("--variant", choices=("seq", "bin"))
    common.add_argument("--out")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run an experiment spec (JSON)")
    r.add_argument("spec")
    r.add_argument("--audit", action="store_true", help="also check the leftover-good inequality")
    r.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("brute", parents=[common], help="exhaustive optimum of a small instance")
    b.add_argument("--objective", default="maxcut")
    b.add_argument("--n", type=int, default=12)
    b.add_argument("--costs", default="uniform01")
    b.add_argument("--budget-fraction", type=float, default=0.5)
    b.add_argument("--constraint", default="knapsack", choices=("knapsack", "cardinality"))
    b.add_argument("--k", type=int)
    b.add_argument("--graph", help="edge list instead of a generated graph")
    b.set_defaults(func=cmd_brute, seed=0)

    c = sub.add_parser("check", parents=[common], help="run the property suites")
    c.add_argument("--n", type=int, default=10)
    c.add_argument("--trials", type=int, default=2000)
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("gen", parents=[common], help="write instance files")
    g.add_argument("kind", choices=("graph", "tags"))
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--p", type=float, default=0.1)
    g.add_argument("--tags", type=int, default=64)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    if args.command == "gen" and not args.out:
        print("gen needs --out", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ParknapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
