"""Command line entry points.

    hubspoke repl   [--config FILE] [--workdir DIR]
    hubspoke serve  [--bind HOST:PORT] [--config FILE] [--workdir DIR]
    hubspoke bench  <suite> --mode <isolated|shared> [--report PATH] ...
    hubspoke attack <cs1..cs4> --mode <isolated|shared> ...
    hubspoke overhead [--suites a,b] ...

`harness` is an alias exposing only the bench/attack/overhead subcommands.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import SUITES
from .config import RuntimeConfig
from .harness import (
    ATTACK_CASES,
    measure_overhead,
    render_bench_table,
    render_overhead_table,
    run_attack,
    run_benchmark,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--workdir", default="./hubspoke-work")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--wall-clock", action="store_true",
                        help="meter real time instead of the virtual clock")


def _bench_cmd(args) -> int:
    report = run_benchmark(args.suite, args.mode, args.workdir, seed=args.seed,
                           deterministic=not args.wall_clock)
    print(render_bench_table(report))
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(report.to_json() + "\n")
        print(f"report written to {args.report}")
    return 0 if report.steps_score == 1.0 and report.overall_score == 1.0 else 1


def _attack_cmd(args) -> int:
    verdict = run_attack(args.case, args.mode, args.workdir, seed=args.seed,
                         deterministic=not args.wall_clock)
    print(verdict.to_json())
    return 0


def _overhead_cmd(args) -> int:
    suites = args.suites.split(",") if args.suites else list(SUITES)
    table = measure_overhead(suites, args.workdir, seed=args.seed,
                             deterministic=not args.wall_clock)
    print(render_overhead_table(table))
    if args.report:
        import json

        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(json.dumps(table, indent=1, sort_keys=True) + "\n")
    return 0


def _repl_cmd(args) -> int:
    from .gateway import repl

    config = RuntimeConfig.from_file(args.config) if args.config else RuntimeConfig()
    repl(Path(args.workdir), config)
    return 0


def _serve_cmd(args) -> int:
    from .gateway import serve

    config = RuntimeConfig.from_file(args.config) if args.config else RuntimeConfig()
    host, _, port = args.bind.partition(":")
    server = serve(Path(args.workdir), config, host=host or "127.0.0.1",
                   port=int(port or 8787))
    print(f"listening on http://{server.server_address[0]}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def _add_harness_subcommands(sub) -> None:
    bench = sub.add_parser("bench", help="run a benchmark suite")
    bench.add_argument("suite", choices=sorted(SUITES))
    bench.add_argument("--mode", choices=["isolated", "shared"], required=True)
    bench.add_argument("--backend", default="scripted",
                       choices=["scripted"], help="acceptance runs are scripted")
    bench.add_argument("--report", default="")
    _add_common(bench)
    bench.set_defaults(func=_bench_cmd)

    attack = sub.add_parser("attack", help="run an attack case study")
    attack.add_argument("case", choices=list(ATTACK_CASES))
    attack.add_argument("--mode", choices=["isolated", "shared"], required=True)
    _add_common(attack)
    attack.set_defaults(func=_attack_cmd)

    overhead = sub.add_parser("overhead", help="emit the per-phase timing table")
    overhead.add_argument("--suites", default="")
    overhead.add_argument("--report", default="")
    _add_common(overhead)
    overhead.set_defaults(func=_overhead_cmd)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="hubspoke")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_harness_subcommands(sub)

    repl = sub.add_parser("repl", help="interactive chat session")
    repl.add_argument("--config", default="")
    _add_common(repl)
    repl.set_defaults(func=_repl_cmd)

    serve_p = sub.add_parser("serve", help="HTTP gateway with event stream")
    serve_p.add_argument("--bind", default="127.0.0.1:8787")
    serve_p.add_argument("--config", default="")
    _add_common(serve_p)
    serve_p.set_defaults(func=_serve_cmd)

    args = parser.parse_args(argv)
    return args.func(args)


def harness_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="harness")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_harness_subcommands(sub)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
