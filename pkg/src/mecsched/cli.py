"""Command line entry point: ``mecsched run|replay|gap|convert-topology|presets``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import (ExperimentConfig, ExperimentError, OutputError, emit_outputs, list_presets, replay,
                          run_experiment, sweep_label, verify_gap)
from .oracle import DominanceError
from .topology import TopologyError, convert_graphml

log = logging.getLogger("mecsched")


def _print_table(results) -> None:
    var = results.config.sweep_variable
    print(f"{var:>14s}  {'scheduler':<13s} {'mean %':>8s} {'min':>7s} {'max':>7s}")
    for rec in results.records:
        print(f"{sweep_label(var, rec.sweep_value)[:14]:>14s}  {rec.scheduler:<13s} {rec.mean:8.2f} {rec.min:7.2f} {rec.max:7.2f}")


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    res = run_experiment(cfg, workers=args.workers, seed=args.seed)
    paths = emit_outputs(res, args.out)
    _print_table(res)
    for k, p in paths.items():
        print(f"  {k:9s} -> {p}")
    return 0


def cmd_replay(args) -> int:
    same, res = replay(args.results, args.out, workers=args.workers)
    _print_table(res)
    print("replay: tables identical" if same else "replay: tables DIFFER")
    return 0 if same else 1


def cmd_gap(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.raw["seed"] = int(args.seed)
    summary = verify_gap(cfg, workers=args.workers)
    print(json.dumps(summary.to_dict(), indent=1))
    return 0 if summary.within_thresholds else 1


def cmd_convert(args) -> int:
    doc = convert_graphml(args.graphml, args.sidecar)
    text = json.dumps(doc, indent=1)
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text)
    return 0


def cmd_presets(args) -> int:
    for name in list_presets():
        cfg = ExperimentConfig.load(name)
        desc = " ".join(str(cfg.raw.get("description", "")).split())
        print(f"{name:8s} {desc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mecsched", description="MEC deadline-violation experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a config file or preset and write result files")
    p.add_argument("config", help="YAML config path or preset name")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="re-run from a <name>.json record and compare tables")
    p.add_argument("results")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("gap", help="MESA vs exact solver on every point that fits the limits")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("convert-topology", help="Topology Zoo GraphML + sidecar -> topology JSON")
    p.add_argument("graphml")
    p.add_argument("sidecar", nargs="?", default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("presets", help="list bundled experiment presets")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ExperimentError, TopologyError, OutputError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DominanceError as e:
        print(f"dominance check failed: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
