"""Command-line entry point: build, query, selftest, bench.

Exit codes: 0 success (including queries answered with status "fail"),
1 usage or configuration error, 2 data error, 3 selftest violation.
Machine-readable results go to stdout as JSON lines; summaries go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time

import numpy as np

from .core import BuildParams
from .errors import (
    BuildError, ConfigError, DataError, DomainError, GeometryError, IndexFormatError, KDEError,
    StructuralError,
)
from .io import load_index, read_points, save_index
from .kernels import kernel_row, parse_kernel

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SELFTEST = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _say(msg: str) -> None:
    sys.stderr.write(msg + "\n")


def _params(args) -> BuildParams:
    common = dict(delta=args.delta, seed=args.seed, num_trees=args.trees, phi=args.phi, c1=args.c1)
    if args.tau is not None:
        return BuildParams.from_tau(args.eps, args.tau, **common)
    return BuildParams(eps=args.eps, xi=args.xi, **common)


def cmd_build(args) -> int:
    from .tree import build_forest

    k = parse_kernel(args.kernel)
    P = read_points(args.input)
    params = _params(args)
    forest = build_forest(P, k, params)
    save_index(forest, args.output)
    stats = dict(forest.stats)
    stats["kernel"] = k.descriptor
    stats["xi"] = forest.params.xi
    _emit(stats)
    _say(
        f"built {stats['trees']} tree(s) over {stats['n']} points in d={stats['d']}: "
        f"{stats['nodes']} nodes, depth {stats['max_depth']}, {stats['build_seconds']:.2f}s -> {args.output}"
    )
    return EXIT_OK


def cmd_query(args) -> int:
    forest = load_index(args.index)
    Q = read_points(args.queries)
    if Q.shape[1] != forest.dim:
        raise StructuralError(f"queries have dimension {Q.shape[1]}, index has {forest.dim}")
    rel_errs = []
    fails = 0
    for i, q in enumerate(Q):
        res = forest.query(q)
        row = {
            "query": i,
            "estimate": res.estimate,
            "status": res.status,
            "nodes_visited": res.stats["nodes_visited"],
        }
        if not res.ok:
            fails += 1
        if args.exact_check:
            exact = math.fsum(kernel_row(forest.kernel, forest.data, q))
            row["exact"] = exact
            if res.ok:
                row["rel_err"] = abs(res.estimate - exact) / exact if exact > 0 else 0.0
                rel_errs.append(row["rel_err"])
        _emit(row)
    if args.exact_check and rel_errs:
        qs = np.quantile(rel_errs, [0.5, 0.9, 0.95, 0.99, 1.0])
        _emit({"summary": "rel_err", "p50": qs[0], "p90": qs[1], "p95": qs[2], "p99": qs[3], "max": qs[4],
               "fails": fails, "queries": len(Q)})
    _say(f"answered {len(Q)} queries, {fails} failed")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import SUITES

    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = 0
    for name in names:
        start = time.perf_counter()
        rows = SUITES[name](args.seed)
        for row in rows:
            _emit(row)
            failed += not row["pass"]
        _say(f"suite {name}: {sum(r['pass'] for r in rows)}/{len(rows)} checks passed "
             f"({time.perf_counter() - start:.1f}s)")
    return EXIT_SELFTEST if failed else EXIT_OK


def cmd_bench(args) -> int:
    from .bench import COLUMNS, bench_row

    k = parse_kernel(args.kernel)
    for n in args.n:
        if n < 2 or args.d < 1:
            raise ConfigError("bench needs n >= 2 and d >= 1")
    w = csv.DictWriter(sys.stdout, fieldnames=COLUMNS)
    w.writeheader()
    for n in args.n:
        row = bench_row(n, args.d, k, args.eps, args.dist, seed=args.seed, tau=args.tau,
                        trees=args.trees, queries=args.queries)
        w.writerow(row)
        sys.stdout.flush()
        _say(f"n={n}: build {row['build_s']}s, p95 query {row['query_p95_s'] * 1e3:.2f} ms")
    return EXIT_OK


def _add_build_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", default="cauchy", help="cauchy | rq:<beta> | expmix:<w>:<t>,...[@<L>:<t>]")
    p.add_argument("--eps", type=float, default=0.2, help="multiplicative error")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--xi", type=float, default=1e-4, help="additive error per point")
    g.add_argument("--tau", type=float, default=None, help="density floor; sets xi = eps * tau / 4")
    p.add_argument("--delta", type=float, default=0.01, help="failure probability per coreset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=3)
    p.add_argument("--phi", type=float, default=None, help="aspect-ratio bound (required above 20000 points)")
    p.add_argument("--c1", type=float, default=0.1, help="constant in the boundary width")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="disckde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build", help="build an index from a CSV of points")
    b.add_argument("input")
    b.add_argument("output")
    _add_build_flags(b)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="answer a CSV of queries against an index")
    q.add_argument("index")
    q.add_argument("queries")
    q.add_argument("--exact-check", action="store_true", help="also report the exact kernel sum")
    q.set_defaults(func=cmd_query)

    s = sub.add_parser("selftest", help="run statistical self-checks")
    s.add_argument("--suite", default="all", choices=["carving", "walk", "embedding", "farfield", "e2e", "all"])
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selftest)

    bn = sub.add_parser("bench", help="benchmark on synthetic data, CSV on stdout")
    bn.add_argument("--n", type=int, nargs="+", default=[1000])
    bn.add_argument("--d", type=int, default=30)
    bn.add_argument("--kernel", default="cauchy")
    bn.add_argument("--eps", type=float, default=0.2)
    bn.add_argument("--tau", type=float, default=1e-3)
    bn.add_argument("--dist", default="uniform-ball", choices=["uniform-ball", "two-clusters", "shells"])
    bn.add_argument("--trees", type=int, default=3)
    bn.add_argument("--queries", type=int, default=100)
    bn.add_argument("--seed", type=int, default=0)
    bn.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, GeometryError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except (DataError, StructuralError, IndexFormatError) as exc:
        _say(f"error: {exc}")
        return EXIT_DATA
    except MemoryError:
        _say("error: out of memory")
        return EXIT_DATA
    except (BuildError, KDEError) as exc:
        _say(f"error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
