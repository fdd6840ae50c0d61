"""Command-line entry point.

Subcommands
-----------
run-spl       one experiment with the consensus projected-ascent learner
run-mpl       one experiment with the meta conditional-gradient learner
run-baseline  one experiment with `--baseline random|greedy`
verify        execute the oracle/property battery; exit 2 on any failure
bench         run a preset's learner matrix over several seeds

Configs are single JSON documents; `--preset` supplies a named base config
and `--config`, `--seed`, `--out` override it.  Exit codes: 0 success,
1 configuration error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, MacoordError
from .harness import (
    PRESETS,
    RunConfig,
    compute_rho_regret,
    export_csv,
    export_json,
    resolve_preset,
    run_bench,
    run_experiment,
)
from .verification import run_verification, write_report


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named base config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macoord",
        description="decentralized coordination experiments on set objectives",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (
        ("run-spl", "consensus projected-ascent learner"),
        ("run-mpl", "meta conditional-gradient learner"),
        ("run-baseline", "random or sequential-greedy baseline"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_run_flags(p)
        if name == "run-baseline":
            p.add_argument(
                "--baseline", choices=("random", "greedy"), default="random"
            )

    p = sub.add_parser("verify", help="run the oracle/property battery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="where to write verify.json")

    p = sub.add_parser("bench", help="preset learner-matrix benchmark")
    p.add_argument("--preset", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (0..n-1)")
    return parser


def _load_run_config(args: argparse.Namespace, forced_kind: str | None) -> RunConfig:
    doc: dict = {}
    if args.preset:
        doc = resolve_preset(args.preset)
    if args.config:
        try:
            with args.config.open() as fh:
                overrides = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        doc.update(overrides)
    if not doc:
        raise ConfigError("need --config and/or --preset")
    if forced_kind is not None:
        learner = dict(doc.get("learner", {}))
        learner["kind"] = forced_kind
        doc["learner"] = learner
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out"] = str(args.out)
    return RunConfig.from_dict(doc)


def _run_single(args: argparse.Namespace, forced_kind: str | None) -> int:
    cfg = _load_run_config(args, forced_kind)
    logs = run_experiment(cfg)
    mean_utility = sum(log.utility for log in logs) / len(logs)
    line = f"{cfg.learner['kind']}: T={cfg.horizon} mean utility {mean_utility:.6g}"
    if cfg.oracle_regret:
        regret = compute_rho_regret(logs, cfg.rho)
        line += f", regret(rho={cfg.rho:.4g}) {regret:.6g}"
    if cfg.out:
        out = Path(cfg.out)
        export_csv(logs, out / "rounds.csv")
        export_json(logs, out / "rounds.json")
        line += f" -> {out}"
    print(line)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run-spl":
            return _run_single(args, "ma-spl")
        if args.command == "run-mpl":
            return _run_single(args, "ma-mpl")
        if args.command == "run-baseline":
            return _run_single(args, args.baseline)
        if args.command == "verify":
            results = run_verification(args.seed)
            width = max(len(r.name) for r in results)
            for r in results:
                mark = "PASS" if r.passed else "FAIL"
                print(f"{r.name:<{width}}  {mark}  {r.detail}")
            if args.out:
                write_report(results, args.out / "verify.json")
            return 0 if all(r.passed for r in results) else 2
        if args.command == "bench":
            summary = run_bench(
                args.preset, args.out, seeds=tuple(range(args.seeds))
            )
            for label, stats in summary["learners"].items():
                print(f"{label}: mean utility {stats['mean_utility']:.6g}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MacoordError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
