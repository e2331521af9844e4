"""Command line entry point."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import experiment, graph


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="feedsim")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a sweep from a TOML config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--workers", type=int, default=None)
    run_p.add_argument("--out", default=None)

    gen_p = sub.add_parser("gen-network", help="write a synthetic follow network")
    gen_p.add_argument("--nodes", type=int, required=True)
    gen_p.add_argument("--edges", type=int, required=True)
    gen_p.add_argument("--core", type=int, required=True)
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--out", required=True)

    val_p = sub.add_parser("validate", help="parse a config and report problems")
    val_p.add_argument("--config", required=True)

    args = parser.parse_args(argv)

    if args.command == "gen-network":
        try:
            net = graph.generate_synthetic(args.nodes, args.edges, args.core, args.seed)
        except graph.GraphError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        graph.save_edge_list(net, args.out)
        print(f"wrote {net.node_count} nodes, {net.edge_count} edges, "
              f"{len(net.core_users)} core users to {args.out}")
        return 0

    try:
        spec = experiment.parse_config(args.config)
    except (experiment.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print("config ok")
        return 0

    if args.workers is not None:
        spec = replace(spec, workers=args.workers)
    if args.out is not None:
        spec = replace(spec, output_dir=args.out)
    return experiment.run_sweep(spec)


if __name__ == "__main__":
    sys.exit(main())
