"""Command-line surface: run / audit / adversary / project / cs-demo / sweep / fuzz.

Each subcommand starts from its scenario's default config, overlays an
optional --config file (see README for the grammar), then applies flag
overrides.  Artifacts land in --out; any failed invariant is recorded in the
report's "failures" list and flips the exit code to 1.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments
from .config import ConfigError, ExperimentConfig


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="config file overlaying the scenario defaults")
    parser.add_argument("--out", type=Path, help="output directory for artifacts")
    parser.add_argument("--seed", type=int, help="experiment seed override")
    parser.add_argument("--eta", type=float, help="constant step size override")
    parser.add_argument("--steps", type=int, help="max_steps override")
    parser.add_argument("--potential", help="potential kind override")
    parser.add_argument("--q", type=float, help="q parameter override for q-norm potentials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smdlab",
        description="Mirror-descent laboratory: runs, identity audits, oracles, experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "run": "run one configured trajectory and export its trace",
        "audit": "run and audit the conservation identity at every step",
        "adversary": "run and evaluate the ratio-one adversary",
        "project": "dual-Newton divergence projection onto the interpolation set",
        "cs-demo": "sparse-recovery experiment across seeds",
        "sweep": "implicit-regularization sweep against projection oracles",
        "fuzz": "randomized identity/minimax audits across the catalog",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "fuzz":
            p.add_argument("--trials", type=int, help="number of fuzz trials")
    return parser


_SCENARIO_FOR_COMMAND = {
    "run": "run_once",
    "audit": "minimax_audit",
    "adversary": "minimax_audit",
    "project": "overparam_linear",
    "cs-demo": "cs_demo",
    "sweep": "implicit_reg_sweep",
    "fuzz": "identity_fuzz",
}


def _load_config(args) -> ExperimentConfig:
    cfg = experiments.default_config(_SCENARIO_FOR_COMMAND[args.command])
    if args.config is not None:
        overlay = ExperimentConfig.from_file(args.config)
        for section, body in overlay.sections.items():
            for key, value in body.items():
                cfg.set(section, key, value)
    if args.seed is not None:
        cfg.set("experiment", "seed", args.seed)
    if args.eta is not None:
        cfg.set("schedule", "kind", "constant")
        cfg.set("schedule", "eta", args.eta)
    if args.steps is not None:
        cfg.set("run", "max_steps", args.steps)
    if args.potential is not None:
        cfg.set("potential", "kind", args.potential)
    if args.q is not None:
        cfg.set("potential", "q", args.q)
    if getattr(args, "trials", None) is not None:
        cfg.set("experiment", "trials", args.trials)
    if args.out is not None:
        cfg.set("experiment", "out", str(args.out))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
    except (ConfigError, OSError) as exc:
        parser.exit(2, f"smdlab: config error: {exc}\n")
    out = args.out if args.out is not None else Path(cfg.get("experiment", "out", "out"))

    try:
        if args.command == "run":
            _, report = experiments.run_once(cfg, out=out)
        elif args.command == "audit":
            _, _, report = experiments.run_audit(cfg, out=out)
        elif args.command == "adversary":
            _, _, report = experiments.run_adversary(cfg, out=out)
        elif args.command == "project":
            _, report = experiments.run_project(cfg, out=out)
        elif args.command == "cs-demo":
            report = experiments.run_cs_demo(cfg, out=out)
        elif args.command == "sweep":
            report = experiments.run_implicit_reg_sweep(cfg, out=out)
        elif args.command == "fuzz":
            report = experiments.run_identity_fuzz(cfg, out=out)
        else:  # pragma: no cover
            parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        parser.exit(2, f"smdlab: config error: {exc}\n")

    failures = report.get("failures", [])
    summary_keys = [
        k for k in ("termination", "num_steps", "max_step_residual", "telescoped_residual",
                    "ratio", "num_success", "num_certified", "converged")
        if k in report
    ]
    summary = ", ".join(f"{k}={report[k]}" for k in summary_keys)
    print(f"{args.command}: {'FAIL' if failures else 'ok'} ({summary}) -> {out}")
    for failure in failures:
        print(f"  failed: {failure}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
