"""Command-line front end.

Subcommands:

* ``parse``  - parse a query file and dump the derived execution plan.
* ``oracle`` - enumerate all matches of a query over an edge CSV file.
* ``run``    - evaluate a query continuously over a CSV file or a socket.
* ``bench``  - run a generated-stream experiment and emit a report.

Exit codes: 0 success, 1 syntax/plan errors, 2 configuration errors,
3 failed recall assertion.
"""

from __future__ import annotations

import argparse
import sys

from . import bench as bench_mod
from .cluster import TRANSPORTS, LocalCluster
from .edges import EdgeIdAllocator
from .ingest import edges_from, read_netflow_file, socket_lines
from .oracle import enumerate_matches
from .planner import PlanError, plan as plan_query
from .query import MembershipRegistry
from .sal import (
    SalSyntaxError,
    is_bare_block,
    parse_program,
    parse_query,
    parse_query_or_program,
)


def _load_query_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def _registry_from_args(args) -> MembershipRegistry:
    registry = MembershipRegistry()
    for entry in getattr(args, "set", None) or []:
        name, _, members = entry.partition("=")
        if not name:
            raise bench_mod.ConfigError(f"bad --set {entry!r}, expected NAME=v1,v2,...")
        registry.register(name, [m for m in members.split(",") if m])
    return registry


def cmd_parse(args) -> int:
    text = _load_query_text(args.query)
    try:
        query = parse_query_or_program(text)
        query_plan = plan_query(
            query,
            max_edge_duration=args.max_edge_duration,
            default_extent=args.default_extent,
        )
    except SalSyntaxError as exc:
        print(f"{args.query}:{exc.line}:{exc.col}: {exc.message}", file=sys.stderr)
        return 1
    except PlanError as exc:
        print(f"plan error: {exc}", file=sys.stderr)
        return 1
    print(query.format())
    print(query_plan.describe())
    return 0


def _load_edges(args):
    allocator = EdgeIdAllocator(0)
    return list(edges_from(read_netflow_file(args.edges), allocator, keep_payload=False))


def cmd_oracle(args) -> int:
    text = _load_query_text(args.query)
    try:
        query = parse_query_or_program(text)
        query_plan = plan_query(
            query,
            max_edge_duration=args.max_edge_duration,
            default_extent=args.default_extent,
        )
    except (SalSyntaxError, PlanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    edges = _load_edges(args)
    registry = _registry_from_args(args)
    matches = enumerate_matches(
        query_plan, edges, membership=registry, injective=args.injective
    )
    by_id = {e.local_id: e for e in edges}
    print(f"matches: {len(matches)}")
    for ids in sorted(matches):
        print("\t".join(by_id[i].format() for i in ids))
    return 0


def cmd_run(args) -> int:
    text = _load_query_text(args.query)
    host, port, hash_name = args.host, args.listen, "IpHashFunction"
    try:
        if is_bare_block(text):
            query = parse_query(text)
        else:
            program = parse_program(text)
            query = program.query
            # a full program names its own endpoint and hash function
            host = args.host or program.connection.host
            port = args.listen or program.connection.port
            for key in (program.subgraph.source_field, program.subgraph.target_field):
                hash_name = program.hash_functions.get(key, hash_name)
        query_plan = plan_query(
            query,
            max_edge_duration=args.max_edge_duration,
            default_extent=args.default_extent,
        )
        cluster = LocalCluster(
            args.workers,
            transport="deterministic",
            seed=args.seed,
            membership=_registry_from_args(args),
            results_path=args.output,
            hash_function=hash_name,
        )
    except (SalSyntaxError, PlanError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cluster.register(query_plan)
    allocator = EdgeIdAllocator(0)
    if args.edges:
        source = read_netflow_file(args.edges)
    else:
        source = socket_lines(host or "127.0.0.1", port or 9999)
    count = cluster.feed(edges_from(source, allocator, keep_payload=False))
    cluster.finish()
    print(f"edges consumed: {count}")
    print(f"matches: {len(cluster.match_multiset())}")
    for store in cluster.workers:
        print(f"-- worker {store.worker_id}")
        print(store.report())
    return 0


def cmd_bench(args) -> int:
    config = bench_mod.ExperimentConfig(
        seed=args.seed,
        worker_count=args.workers,
        vertex_pool_size=args.vertices,
        edges_per_worker=args.edges_per_worker,
        rate_per_worker=args.rate,
        transport=args.transport,
        keep_probability=args.keep_probability,
        query_path=args.query,
        with_oracle=args.with_oracle,
        pace=args.pace,
        max_latency=args.max_latency,
        drop_probability=args.drop_probability,
        max_edge_duration=args.max_edge_duration,
        default_extent=args.default_extent,
        results_path=args.output,
        report_path=args.report,
    )
    registry = _registry_from_args(args)
    try:
        report = bench_mod.run_experiment(config, membership=registry)
    except bench_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SalSyntaxError, PlanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(report.summary_table())
    if args.assert_recall is not None:
        if report.recall is None or report.recall < args.assert_recall:
            print(
                f"recall {report.recall} below required {args.assert_recall}",
                file=sys.stderr,
            )
            return 3
    return 0


def _add_query_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-edge-duration", type=float, default=60.0,
                        help="assumed upper bound on edge durations (seconds)")
    parser.add_argument("--default-extent", type=float, default=None,
                        help="fallback match extent when none is derivable")
    parser.add_argument("--set", action="append", metavar="NAME=v1,v2,...",
                        help="register a membership set (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamsub",
                                     description="Streaming temporal subgraph matching")
    sub = parser.add_subparsers(dest="command", required=True)

    p_parse = sub.add_parser("parse", help="parse a query and dump its plan")
    p_parse.add_argument("query", help="query file (.sal or bare block)")
    _add_query_options(p_parse)
    p_parse.set_defaults(func=cmd_parse)

    p_oracle = sub.add_parser("oracle", help="enumerate matches by brute force")
    p_oracle.add_argument("--query", required=True)
    p_oracle.add_argument("--edges", required=True, help="edge CSV file")
    p_oracle.add_argument("--injective", action="store_true",
                          help="require distinct vertices for distinct variables")
    _add_query_options(p_oracle)
    p_oracle.set_defaults(func=cmd_oracle)

    p_run = sub.add_parser("run", help="run a query over a file or socket stream")
    p_run.add_argument("--query", required=True)
    p_run.add_argument("--edges", help="edge CSV file (omit to listen on a socket)")
    p_run.add_argument("--listen", type=int, default=None,
                       help="port to listen on (default: the program's connection port, else 9999)")
    p_run.add_argument("--host", default=None)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--output", help="write matches to this file")
    _add_query_options(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run a generated-stream experiment")
    p_bench.add_argument("--query", required=True)
    p_bench.add_argument("--seed", type=int, required=True)
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--vertices", type=int, default=100)
    p_bench.add_argument("--edges-per-worker", type=int, default=1000)
    p_bench.add_argument("--rate", type=float, default=1000.0)
    p_bench.add_argument("--transport", choices=TRANSPORTS, default="deterministic")
    p_bench.add_argument("--keep-probability", type=float, default=1.0)
    p_bench.add_argument("--with-oracle", action="store_true")
    p_bench.add_argument("--pace", action="store_true",
                         help="pace the stream to the configured rate in wall time")
    p_bench.add_argument("--max-latency", type=float, default=None)
    p_bench.add_argument("--drop-probability", type=float, default=0.0)
    p_bench.add_argument("--output", help="write matches to this file")
    p_bench.add_argument("--report", help="write the JSON report to this file")
    p_bench.add_argument("--assert-recall", type=float, default=None)
    _add_query_options(p_bench)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except bench_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
