#!/usr/bin/env python3
"""
lpdp_cli.py

Command-line runner for guided edit-flow experiments.

Usage:
    python lpdp_cli.py run --config configs/enhancer_toy.json
    python lpdp_cli.py run --config configs/splice_toy.json --seed 3 --workers 8 --out runs/splice
    python lpdp_cli.py verify --preset default
    python lpdp_cli.py diagnose runs/enhancer_toy
    python lpdp_cli.py ablate --config configs/enhancer_toy.json --axis horizon

Options:
    --config PATH     Experiment config (JSON)
    --seed N          Override the run seed
    --out DIR         Output directory (default: $LPDP_OUT_DIR/<config name>)
    --workers N       Sample-level worker threads (default: $LPDP_WORKERS or 4)
    --preset NAME     verify scale: tiny, default, fault
    --axis NAME       ablate axis: window, length, lambda, horizon
    --method NAME     method block to ablate or diagnose
    --verbose         Debug logging
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from threading import Lock

from diagnostics import diagnose_instances, replay_instances, write_diagnostics_csv
from errors import LpdpError
from experiment import DEFAULT_OUT_DIR, MANIFEST_FILE, ExperimentResult, Task, build_manifest, load_config, \
    load_run, method_params, run_ablation, run_experiment, select_method, write_csv, write_outputs
from lpdp import GuidanceConfig
from oracle import CachedOracle
from report import write_summary, write_verify_report
from verify_properties import Colors, print_summary, run_checks

print_lock = Lock()


def safe_print(*args, **kwargs):
    """Thread-safe print."""
    with print_lock:
        print(*args, **kwargs)


def progress(method: str, done: int, total: int, record):
    safe_print(f"  [{done}/{total}] {method}: reward {record.reward:.4f}, calls {record.misses}")


def default_out_dir(config_path: str, configured: str = None) -> Path:
    if configured:
        return Path(configured)
    return DEFAULT_OUT_DIR / Path(config_path).stem


def print_rows(rows: list, keys: list):
    for row in rows:
        parts = [f"{k}={row[k]:.4f}" if isinstance(row.get(k), float) else f"{k}={row.get(k)}" for k in keys]
        print("  " + ", ".join(parts))


def cmd_run(args) -> int:
    config, text = load_config(args.config)
    out_dir = Path(args.out) if args.out else default_out_dir(args.config, config.run.out_dir)
    seed = config.run.seed if args.seed is None else args.seed

    print(f"Running {len(config.methods)} method(s) x {config.run.samples} samples "
          f"(T={config.run.total_steps}, window {config.run.window}, seed {seed}, cache {config.run.cache})\n")
    start = time.time()
    result = run_experiment(config, seed=seed, workers=args.workers, progress=progress)
    elapsed = time.time() - start

    write_outputs(result, out_dir, text)
    with open(out_dir / MANIFEST_FILE) as f:
        manifest = json.load(f)
    write_summary(result.rows, manifest, out_dir)

    print(f"\n{'=' * 50}")
    print(f"Complete! {len(config.methods)} method(s) in {elapsed:.1f}s")
    print_rows(result.rows, ["method", "reward_mean", "jsd3", "traj_ll", "calls_per_sample"])
    print(f"\nOutputs written to: {out_dir}")
    return 0


def cmd_verify(args) -> int:
    print(f"\n{Colors.BOLD}Guidance property checks ({args.preset}){Colors.RESET}")
    start = time.time()
    results = run_checks(args.preset, echo=True)
    if args.out:
        path = write_verify_report(results, args.preset, args.out)
        print(f"\nReport: {path}")
    return print_summary(results, start)


def guidance_for(config, method_name: str = None) -> tuple:
    """(method name whose states are replayed, GuidanceConfig used for the diagnostics)."""
    method = select_method(config, method_name)
    if method.kind == "lpdp":
        return method.name, method_params(method)
    try:
        lpdp_block = select_method(config, kind="lpdp")
        return method.name, method_params(lpdp_block)
    except LpdpError:
        return method.name, GuidanceConfig()


def cmd_diagnose(args) -> int:
    run_dir = Path(args.run_dir)
    config, records = load_run(run_dir)
    name, guidance = guidance_for(config, args.method)
    instances = replay_instances(records.get(name, []))
    if args.max_instances:
        instances = instances[:args.max_instances]
    if not instances:
        print(f"No guided states recorded for {name!r} in {run_dir}")
        return 1

    print(f"Diagnosing {len(instances)} guided states from {name!r}...")
    task = Task.build(config.task)
    results = diagnose_instances(instances, guidance, task.model, CachedOracle(task.oracle))
    path = write_diagnostics_csv(results, Path(args.out) if args.out else run_dir / "diagnostics.csv")

    for r in results:
        agreement = ", ".join(f"{b} {v:.3f}" for b, v in r.top1_agreement.items())
        mass = "-" if r.mass_eff is None else f"{r.mass_eff:.3f}"
        print(f"  {r.rule:9s} cand {r.cand_ratio:.3f}  paths {r.path_ratio:.3f}  top1 [{agreement}]  "
              f"tail {r.mixed_rank_tail:.3f}  mass {mass}")
    print(f"\nDiagnostics written to: {path}")
    return 0


def cmd_ablate(args) -> int:
    config, text = load_config(args.config)
    out_dir = Path(args.out) if args.out else default_out_dir(args.config, config.run.out_dir)
    seed = config.run.seed if args.seed is None else args.seed

    print(f"Ablating {args.axis} on {config.run.samples} samples (seed {seed})\n")
    rows = run_ablation(config, args.axis, method_name=args.method, seed=seed, workers=args.workers,
                        progress=progress)

    out_dir.mkdir(parents=True, exist_ok=True)
    path = write_csv(rows, out_dir / f"ablation_{args.axis}.csv")
    manifest = build_manifest(ExperimentResult(config, seed), text, command=f"ablate {args.axis}")
    write_summary(rows, manifest, out_dir, title=f"Ablation: {args.axis}")

    print(f"\n{'=' * 50}")
    print_rows(rows, ["value", "window", "reward_mean", "reward_stderr", "calls_per_sample"])
    print(f"\nAblation written to: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Local re-solving guidance for edit-flow rollouts")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run every method block of a config", parents=[common])
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--workers", type=int)
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="Property checks against brute-force solvers", parents=[common])
    verify.add_argument("--preset", default="tiny", choices=["tiny", "default", "fault"])
    verify.add_argument("--out", help="Directory for verify_report.md")
    verify.set_defaults(func=cmd_verify)

    diagnose = sub.add_parser("diagnose", help="Same-type rule diagnostics on a finished run", parents=[common])
    diagnose.add_argument("run_dir")
    diagnose.add_argument("--method")
    diagnose.add_argument("--max-instances", type=int)
    diagnose.add_argument("--out", help="CSV path (default: <run_dir>/diagnostics.csv)")
    diagnose.set_defaults(func=cmd_diagnose)

    ablate = sub.add_parser("ablate", help="Sweep one guidance axis", parents=[common])
    ablate.add_argument("--config", required=True)
    ablate.add_argument("--axis", required=True, choices=["window", "length", "lambda", "horizon"])
    ablate.add_argument("--method")
    ablate.add_argument("--seed", type=int)
    ablate.add_argument("--out")
    ablate.add_argument("--workers", type=int)
    ablate.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except LpdpError as e:
        print(f"Error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
