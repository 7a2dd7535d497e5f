"""Command-line interface.

Verbs: collect, train-vae, train-rl, eval, report, selftest.
Exit codes: 0 ok, 2 I/O failure, 3 missing upstream artifact,
4 malformed input/config, 5 numeric divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigError, MissingArtifactError, NumericError
from .config import (
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    persist_snapshot,
)

EXIT_OK = 0
EXIT_IO = 2
EXIT_MISSING = 3
EXIT_MALFORMED = 4
EXIT_NUMERIC = 5


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="goalforge",
        description="Physics-filtered goal imagination experiments on 2D manipulation tasks")
    sub = p.add_subparsers(dest="verb", required=True)

    def add_common(sp):
        sp.add_argument("--config", type=Path, default=None, help="JSON config path")
        sp.add_argument("--out", type=Path, default=Path("runs/default"), help="output directory")
        sp.add_argument("--method", choices=("rig", "pi-rig", "oracle"), default=None)
        sp.add_argument("--env", choices=("reacher2", "pusher2", "pickplace2"), default=None)
        sp.add_argument("--seeds", type=str, default=None, help="comma-separated seed list")
        sp.add_argument("--log-goals", action="store_true", help="append candidate audit NDJSON")

    for verb in ("collect", "train-vae", "train-rl", "eval"):
        add_common(sub.add_parser(verb))
    rp = sub.add_parser("report")
    rp.add_argument("metrics", nargs="+", help="metrics CSV file(s)")
    rp.add_argument("--out", type=Path, default=Path("runs/report"))
    sub.add_parser("selftest", help="gradient + physics invariant batteries")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.method:
        cfg.method = args.method
    if args.env:
        cfg.env = args.env
    if args.seeds:
        try:
            cfg.seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}")
    if args.log_goals:
        cfg.log_goals = True
    return config_from_dict(config_to_dict(cfg))  # re-validate after overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "selftest":
            from .selftest import run_selftest
            return EXIT_OK if run_selftest() else EXIT_NUMERIC
        if args.verb == "report":
            from .report import cmd_report
            summary = cmd_report(args.metrics, args.out)
            print(f"report written to {args.out} ({summary['n_rows']} metric rows)")
            return EXIT_OK

        from . import pipeline
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        persist_snapshot(cfg, out)
        if args.verb == "collect":
            paths = pipeline.cmd_collect(cfg, out)
            print(f"collected {len(paths)} dataset(s) under {out}")
        elif args.verb == "train-vae":
            paths = pipeline.cmd_train_vae(cfg, out)
            print(f"trained {len(paths)} VAE checkpoint(s) under {out}")
        elif args.verb == "train-rl":
            paths = pipeline.cmd_train_rl(cfg, out)
            print(f"trained {len(paths)} policy checkpoint(s) under {out}")
        elif args.verb == "eval":
            results = pipeline.cmd_eval(cfg, out)
            for seed, m in zip(cfg.seeds, results):
                print(f"seed {seed}: object_dist {m.object_dist:.4f} "
                      f"feasibility {m.goal_feasibility_rate:.2f}")
        return EXIT_OK
    except MissingArtifactError as e:
        print(f"error: missing upstream artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MALFORMED
    except NumericError as e:
        print(f"error: numeric divergence: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"error: I/O failure: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
