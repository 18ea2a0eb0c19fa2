"""Command-line front end: train, eval, compare, validate-config, export-defaults."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import harness
from .harness import ConfigError


def _add_common(p, config_required=True):
    p.add_argument("--config", required=config_required,
                   help="path to a JSON experiment document")
    p.add_argument("--seed", type=int, default=None,
                   help="seed override (falls back to config, then $"
                        + harness.SEED_ENV_VAR + ")")
    p.add_argument("--agent", default=None,
                   help="agent kind override: " + "/".join(sorted(harness.AGENT_KINDS)))
    p.add_argument("--epochs", type=int, default=None, help="epoch count override")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vnf-lab",
        description="Edge VNF orchestration experiments: simulator, learner, baselines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train (or just run) one agent and record metrics")
    _add_common(p)
    p = sub.add_parser("eval", help="evaluate one agent without exploration")
    _add_common(p)
    p = sub.add_parser("compare", help="run several agents on one traffic trace")
    _add_common(p)
    p.add_argument("--agents", default="pat,greedy,cloud",
                   help="comma-separated agent kinds")
    p = sub.add_parser("validate-config", help="check a config document and exit")
    p.add_argument("--config", required=True)
    p = sub.add_parser("export-defaults", help="print the default experiment document")
    p.add_argument("--out", default=None, help="write to a file instead of stdout")
    return parser


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    if getattr(args, "agent", None):
        cfg = dataclasses.replace(cfg, agent=harness.default_agent_config(args.agent))
    if getattr(args, "epochs", None) is not None:
        if args.epochs < 1:
            raise ConfigError("--epochs must be >= 1")
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(
            cfg.run, total_epochs=args.epochs))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = _load(args)
            out = args.out or "runs/train"
            result = harness.run_experiment(cfg, out_dir=out, seed=args.seed,
                                            quiet=args.quiet)
            if not args.quiet:
                print(f"metrics: {result.metrics_path}")
                for key, val in sorted(result.eval_kpis.items()):
                    print(f"eval {key}: {val:.6g}")
            return 0

        if args.command == "eval":
            cfg = _load(args)
            seed = harness.resolve_seed(cfg, args.seed)
            env = harness.build_env(cfg, seed, stream=1)
            agent = harness.build_agent(cfg, env, seed)
            ckpt = cfg.run.checkpoint_path
            if ckpt and os.path.exists(ckpt) and hasattr(type(agent), "load"):
                agent = type(agent).load(ckpt, seed=seed)
            epochs = args.epochs or cfg.run.eval_epochs or 100
            rows = harness.evaluate_agent(cfg, agent, seed, epochs)
            kpis = harness.compute_kpis(rows)
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                path = os.path.join(args.out, "eval_metrics.csv")
                with open(path, "w") as fh:
                    fh.write(harness.CSV_HEADER + "\n")
                    for m in rows:
                        fh.write(harness.metrics_row(m) + "\n")
            if not args.quiet:
                for key, val in sorted(kpis.items()):
                    print(f"{key}: {val:.6g}")
            return 0

        if args.command == "compare":
            cfg = _load(args)
            names = [n.strip() for n in args.agents.split(",") if n.strip()]
            seed = harness.resolve_seed(cfg, args.seed)
            result = harness.compare(cfg, names, seeds=[seed], out_dir=args.out,
                                     quiet=args.quiet)
            for name in names:
                cells = ", ".join(f"{k}={v[0]:.6g}" for k, v in
                                  sorted(result.kpis[name].items()))
                print(f"{name}: {cells}")
            return 0

        if args.command == "validate-config":
            harness.load_config(args.config)
            print("ok")
            return 0

        if args.command == "export-defaults":
            text = harness.export_defaults()
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            return 0
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
