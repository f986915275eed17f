"""Command-line entry point: ``run``, ``compare``, ``replay`` and ``selftest``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ABLATIONS, ConfigError, load
from .runner import CheckpointError, output_root, replay, run_experiment
from .stats import GridMismatch, compare_run_sets


def _cmd_run(args) -> int:
    cfg = load(args.config, args.ablation, args.set or [])
    if args.seeds:
        cfg = cfg.with_seeds(tuple(int(s) for s in args.seeds.split(",")))
    out = Path(args.out) if args.out else output_root() / f"{cfg.ablation}-{cfg.hash}"
    print(f"config {cfg.hash} ({cfg.ablation}) -> {out}")
    for res in run_experiment(cfg, out):
        last = res.rows[-1]["return"] if res.rows else float("nan")
        print(f"seed {res.seed}: {len(res.rows)} episodes, last return {last:.3f}, {res.seconds:.1f}s")
    return 0


def _cmd_compare(args) -> int:
    sets = {}
    for item in args.runs:
        name, _, path = item.rpartition("=")
        sets[name or Path(path).name] = path
    pairs = [tuple(p.split(":", 1)) for p in args.pair] if args.pair else None
    comp = compare_run_sets(sets, metric=args.metric, window=args.window, pairs=pairs)
    print(comp.table())
    if args.out:
        Path(args.out).write_text(comp.curves_csv)
    return 0


def _cmd_replay(args) -> int:
    recs = replay(args.checkpoint, args.seed, args.steps, no_plan=args.no_plan)
    lines = "".join(json.dumps(r) + "\n" for r in recs)
    if args.out:
        Path(args.out).write_text(lines)
    else:
        sys.stdout.write(lines)
    return 0


def _cmd_selftest(args) -> int:
    from ..acceptance import FAST, run_criteria

    ids = [int(x) for x in args.criteria.split(",")] if args.criteria else list(FAST)
    results = run_criteria(ids)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latentmpc", description="Latent MPC experiment runner")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="train every seed of a config")
    r.add_argument("--config", required=True)
    r.add_argument("--ablation", choices=ABLATIONS)
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    r.add_argument("--seeds", help="comma-separated seeds replacing the config's")
    r.add_argument("--out", help="output directory (default: $LATENTMPC_OUTPUT_ROOT/<ablation>-<hash>)")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compare", help="compare run sets across seeds")
    c.add_argument("runs", nargs="+", metavar="[NAME=]DIR")
    c.add_argument("--metric", default="return")
    c.add_argument("--window", type=int, default=20, help="final episodes averaged per seed")
    c.add_argument("--pair", action="append", metavar="A:B", help="test mean(A) > mean(B)")
    c.add_argument("--out", help="write per-episode mean/CI curves as CSV")
    c.set_defaults(func=_cmd_compare)

    y = sub.add_parser("replay", help="act from a checkpoint without learning")
    y.add_argument("--checkpoint", required=True)
    y.add_argument("--seed", type=int, required=True)
    y.add_argument("--steps", type=int, default=100)
    y.add_argument("--no-plan", action="store_true")
    y.add_argument("--out")
    y.set_defaults(func=_cmd_replay)

    s = sub.add_parser("selftest", help="run the oracle and invariant checks")
    s.add_argument("--criteria", help="comma-separated criterion numbers (default: the fast ones)")
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, GridMismatch, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
