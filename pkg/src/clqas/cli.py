"""Command-line front end: benchmark runs, report tables, theory checks,
dataset utilities.

Exit codes: 0 success, 1 assertion or run failure, 2 usage/config error.
The CLQAS_SEED environment variable overrides the configured seed list.
Result files embed the fully resolved configuration and its hash; reruns
with identical config and seed produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import METHODS, ConfigError, RunConfig, load_config
from .data import check_ecg, gen_financial, load_ecg, save_tasks
from .harness import run_sequence
from .report import aggregate, load_records, render_csv, render_text
from .theory import SUITES

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clqas",
        description="Continual quantum architecture search benchmark runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the benchmark for methods x seeds")
    run.add_argument("--config", help="TOML config file")
    run.add_argument("--method", choices=METHODS, help="run a single method")
    run.add_argument("--dataset", choices=("financial", "ecg"))
    run.add_argument("--seeds", help="comma-separated seed list, e.g. 1,2,3")
    run.add_argument("--jobs", type=int, default=1, help="parallel (method, seed) workers")
    run.add_argument("--out", help="output directory for result files")

    rep = sub.add_parser("report", help="aggregate result files into tables")
    rep.add_argument("results_dir")
    rep.add_argument("--force", action="store_true", help="aggregate across config hashes")

    theory = sub.add_parser("theory-check", help="run a property-check suite")
    theory.add_argument("suite", choices=sorted(SUITES))
    theory.add_argument("--trajectories", type=int, default=100_000)
    theory.add_argument("--seed", type=int, default=0)

    ds = sub.add_parser("datasets", help="dataset generation and validation")
    ds_sub = ds.add_subparsers(dest="ds_command", required=True)
    gen = ds_sub.add_parser("gen-financial", help="generate and cache financial tasks")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--steps", type=int, default=6000)
    gen.add_argument("--tasks", type=int, default=8)
    chk = ds_sub.add_parser("check-ecg", help="validate an ECG beat CSV")
    chk.add_argument("path")
    return parser


def _resolve_config(args) -> RunConfig:
    overrides = {}
    if args.method:
        overrides["methods"] = [args.method]
    if args.dataset:
        overrides["dataset"] = args.dataset
    if args.seeds:
        try:
            overrides["seeds"] = [int(s) for s in args.seeds.split(",") if s]
        except ValueError:
            raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}")
    if args.out:
        overrides["out"] = args.out
    env_seed = os.environ.get("CLQAS_SEED")
    if env_seed is not None:
        try:
            overrides["seeds"] = [int(env_seed)]
        except ValueError:
            raise ConfigError(f"CLQAS_SEED must be an integer, got {env_seed!r}")
    if args.config:
        return load_config(args.config, overrides=overrides)
    return RunConfig.from_flat(overrides)


def _load_tasks(cfg: RunConfig):
    if cfg.dataset == "financial":
        return gen_financial(
            cfg.data_seed,
            n_steps=cfg.data_n_steps,
            n_regimes=cfg.data_n_regimes,
            n_tasks=cfg.data_n_tasks,
            max_samples_per_task=cfg.data_max_samples_per_task,
        )
    records = cfg.data_ecg_records or None
    return load_ecg(cfg.data_ecg_path, records=records, seed=cfg.data_seed)


def _write_record(record, out_dir: Path) -> Path:
    path = out_dir / f"{record.method}_seed{record.seed}.json"
    path.write_text(json.dumps(record.to_dict(), sort_keys=True, indent=2) + "\n")
    return path


def _cmd_run(args) -> int:
    cfg = _resolve_config(args)
    tasks = _load_tasks(cfg)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(method, seed) for method in cfg.methods for seed in cfg.seeds]
    interrupted = False

    def one(method_seed):
        method, seed = method_seed
        return run_sequence(tasks, method, [seed], cfg)[0]

    records = []
    try:
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                records = list(pool.map(one, jobs))
        else:
            for job in jobs:
                records.append(one(job))
    except KeyboardInterrupt:
        interrupted = True

    for record in records:
        path = _write_record(record, out_dir)
        print(f"wrote {path}")
    if interrupted:
        print(
            f"interrupted: {len(records)}/{len(jobs)} runs completed; results are partial",
            file=sys.stderr,
        )
        return 1

    tables = aggregate(records)
    text = render_text(tables)
    (out_dir / "summary.txt").write_text(text)
    (out_dir / "summary.csv").write_text(render_csv(tables))
    print(text)
    return 0


def _cmd_report(args) -> int:
    records = load_records(args.results_dir)
    tables = aggregate(records, force=args.force)
    print(render_text(tables))
    print(render_csv(tables), end="")
    return 0


def _cmd_theory(args) -> int:
    suite = SUITES[args.suite]
    kwargs = {"seed": args.seed}
    if args.suite == "noise":
        kwargs["trajectories"] = args.trajectories
    results = suite(**kwargs)
    failures = 0
    for row in results:
        status = "PASS" if row.passed else "FAIL"
        detail = f" -- {row.detail}" if row.detail else ""
        print(f"[{status}] {row.name}{detail}")
        failures += 0 if row.passed else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 1


def _cmd_datasets(args) -> int:
    if args.ds_command == "gen-financial":
        tasks = gen_financial(args.seed, n_steps=args.steps, n_tasks=args.tasks)
        save_tasks(tasks, args.out, seed=args.seed)
        sizes = [t.sizes for t in tasks]
        print(f"wrote {args.out}: {len(tasks)} tasks, split sizes {sizes}")
        return 0
    summary = check_ecg(args.path)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "theory-check":
            return _cmd_theory(args)
        return _cmd_datasets(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
