"""Command-line entry point.

Subcommands: ``train``, ``eval``, ``baseline``, ``sweep`` and ``preset``.
Run directories default to ``$MARL_ACCESS_RUNS`` (or ``./runs``).

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
3 training diverged (non-finite loss).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

from . import __version__, checkpoint
from .config import PRESETS, TrainConfig, ValidationError, check_eval_devices, get_preset, parse_and_validate
from .experiments import describe, learning_curve_table, run_preset
from .metrics import comparison_table, per_device_table
from .nn import ConfigError, TrainingError
from .trainer import evaluate, run_baseline, train

RUNS_ENV = "MARL_ACCESS_RUNS"
EXIT_RUNTIME, EXIT_VALIDATION, EXIT_DIVERGED = 1, 2, 3

log = logging.getLogger("marl_access")


def runs_root() -> Path:
    return Path(os.environ.get(RUNS_ENV, "runs"))


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override its values")
    group = p.add_argument_group("configuration (any TrainConfig field)")
    for f in fields(TrainConfig):
        # raw strings: coercion and range checks happen in config validation
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar=f.type.upper())


def _resolve(args) -> TrainConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(TrainConfig)}
    return parse_and_validate(args.config, overrides)


def _run_dir(args, name: str) -> Path:
    if args.run_dir:
        return Path(args.run_dir)
    return runs_root() / f"{name}-{time.strftime('%Y%m%d-%H%M%S')}"


def _print_bundle(bundle, as_json: bool) -> None:
    if as_json:
        print(json.dumps(bundle.to_dict(), indent=2))
    else:
        print(comparison_table({"policy": bundle}), end="")
        print(per_device_table(bundle), end="")


def cmd_train(args) -> int:
    cfg = _resolve(args)
    run_dir = _run_dir(args, f"{cfg.algorithm}-n{cfg.num_devices}-s{cfg.seed}")
    result = train(cfg, run_dir=run_dir, progress=True)
    if args.plot_data:
        (run_dir / "learning_curve.tsv").write_text(learning_curve_table({cfg.algorithm: result}))
    ev = result.manifest.evaluation
    print(f"run directory: {run_dir}")
    print(f"test throughput {ev['throughput']:.4f}  average AoP {ev['aop']:.3f}")
    return 0


def cmd_eval(args) -> int:
    target = Path(args.checkpoint)
    if target.is_dir():
        target = target / "checkpoint.ckpt"
    kwargs = {k: getattr(args, k) for k in ("num_devices", "arrival_rate", "horizon", "episodes", "seed")}
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    if "num_devices" in kwargs:
        _, meta = checkpoint.load(target)
        check_eval_devices(parse_and_validate(meta["config"]), kwargs["num_devices"])
    _print_bundle(evaluate(target, **kwargs), args.json)
    return 0


def cmd_baseline(args) -> int:
    cfg = _resolve(args)
    bundle = run_baseline(cfg, args.policy, episodes=args.episodes_eval, transmit_prob=args.transmit_prob,
                          cw0=args.cw0, cw_max=args.cw_max)
    _print_bundle(bundle, args.json)
    return 0


def _train_one(cfg: TrainConfig, run_dir: Path) -> dict:
    res = train(cfg, run_dir=run_dir)
    return {"seed": cfg.seed, "run_dir": str(run_dir), **{k: res.manifest.evaluation[k] for k in ("throughput", "aop")}}


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    root = _run_dir(args, f"sweep-{cfg.algorithm}-n{cfg.num_devices}")
    jobs = [(cfg.with_updates(seed=s), root / f"seed{s}") for s in seeds]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(_train_one, *zip(*jobs)))
    lines = ["seed\tthroughput\taop\trun_dir"] + [
        f"{r['seed']}\t{r['throughput']:.4f}\t{r['aop']:.3f}\t{r['run_dir']}" for r in rows
    ]
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.tsv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_preset(args) -> int:
    if args.list or not args.name:
        for name in sorted(PRESETS):
            print(describe(PRESETS[name]))
        return 0
    get_preset(args.name)
    overrides = {
        f.name: getattr(args, f.name) for f in fields(TrainConfig) if f.name != "seed" and getattr(args, f.name) is not None
    }
    out = run_preset(args.name, args.seed, args.root or runs_root(), overrides or None, plot_data=args.plot_data)
    for table in ("comparison.tsv", "activations.tsv", "groups.tsv", "scalability.tsv"):
        if (out / table).exists():
            print(f"== {table}")
            print((out / table).read_text(), end="")
    print(f"preset directory: {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marl-access", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy and evaluate it")
    _add_config_flags(p)
    p.add_argument("--run-dir", help=f"output directory (default: ${RUNS_ENV}/<name>-<time>)")
    p.add_argument("--plot-data", action="store_true", help="also write learning_curve.tsv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint (or run directory)")
    p.add_argument("checkpoint")
    p.add_argument("--num-devices", type=int)
    p.add_argument("--arrival-rate", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="evaluate BEB or fixed-probability ALOHA")
    _add_config_flags(p)
    p.add_argument("--policy", choices=("beb", "aloha"), default="beb")
    p.add_argument("--transmit-prob", type=float, default=0.5)
    p.add_argument("--cw0", type=int, default=2)
    p.add_argument("--cw-max", type=int, default=1024)
    p.add_argument("--episodes-eval", type=int, default=None, help="evaluation episodes (default eval_episodes)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("sweep", help="train the same config for several seeds in parallel processes")
    _add_config_flags(p)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--jobs", type=int, default=os.cpu_count())
    p.add_argument("--run-dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("preset", help="run a bundled experiment preset")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--root", help=f"parent directory (default ${RUNS_ENV} or ./runs)")
    p.add_argument("--plot-data", action="store_true", help="also write learning_curves.tsv")
    group = p.add_argument_group("overrides applied to every run")
    for f in fields(TrainConfig):
        if f.name != "seed":
            group.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar=f.type.upper())
    p.set_defaults(func=cmd_preset, config=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValidationError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
