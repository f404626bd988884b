"""Command line entry point: ``sim run | preset | trace-dump``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError
from .graph import GraphError
from .harness import PRESETS, parse_config, parse_graph, point_config, preset, run_experiment
from .kernels import KERNELS, dump_trace, run_kernel

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Transmuter + prefetcher simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--parallel", type=int, default=1, metavar="K")
    common.add_argument("--seed", type=int, default=None, help="base seed for the experiment")
    common.add_argument("--max-cycles", type=int, default=None)
    common.add_argument("--json", action="store_true", help="write JSON instead of CSV")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", parents=[common], help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", default=None)

    pr = sub.add_parser("preset", parents=[common], help="run a canned sweep")
    pr.add_argument("name", choices=PRESETS)
    pr.add_argument("--graph", required=True, help="e.g. 'uniform n=10000 deg=8' or a file")
    pr.add_argument("--kernel", choices=KERNELS, default="pagerank")
    pr.add_argument("--iters", type=int, default=None, help="PageRank iterations")
    pr.add_argument("--out", required=True)

    t = sub.add_parser("trace-dump", parents=[common], help="write the first point's reference streams")
    t.add_argument("config")
    t.add_argument("--out", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.cmd == "preset":
            params = {"iters": args.iters} if args.iters and args.kernel == "pagerank" else {}
            spec = preset(args.name, parse_graph(args.graph, "--graph"), args.kernel, params)
        else:
            spec = parse_config(args.config)
        if args.seed is not None:
            spec.seed = args.seed
        if args.cmd == "trace-dump":
            kernel, cfg = point_config(spec, 0, 0, spec.config_points()[0])
            kr = run_kernel(kernel, spec.graph.build(), cfg.num_gpes, cfg.block_bytes,
                            **(spec.kernel_params if kernel == spec.kernel else {}))
            out = args.out or f"{spec.name}.trace"
            n = dump_trace(kr, out)
            print(f"wrote {n} records to {out}")
            return EXIT_OK
        fmt = "json" if args.json else "csv"
        out = args.out or spec.output or f"{spec.name}.{fmt}"
        rows, code = run_experiment(spec, out, args.parallel, fmt, args.max_cycles)
    except (ConfigError, GraphError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} rows -> {Path(out)}" + (f" ({failed} failed)" if failed else ""))
    return EXIT_ABORT if code else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
