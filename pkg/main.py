#!/usr/bin/env python3
"""
Weighted Gaussian Sobolev Calculus - Main Entry Point

Usage:
    python main.py run --config configs/acceptance_hyperplane.json

    python main.py list-checks

    python main.py describe gauss_green_sphere

    python main.py check gauss-green --config configs/sphere.yaml

    python main.py check divergence --weight gaussian_type:0.05 --field coordinate:1 --budget 200000
"""

import argparse
import json
import sys
from pathlib import Path

import yaml
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from flows.suite import CHECKS, EXIT_CONFIG, run_suite
from models.schemas import RunConfig

console = Console()

CHECK_GROUPS = {
    "divergence": ["bilinear", "energy", "adjointness", "l2_bound", "condition_41"],
    "gauss-green": ["gauss_green_hyperplane", "vector_gauss_green", "trace_q_identities"],
}

# weight kind -> WeightSpec key taken from "kind:value"
WEIGHT_PARAMS = {"gaussian_type": "lambda", "lq_norm": "q", "sup_norm_kl": "grid"}
DEFAULT_SPECTRUM = "1,0.5,0.25,0.125"


class ConfigError(Exception):
    pass


# ============================================================
# CLI Argument Parser
# ============================================================

def _add_overrides(p: argparse.ArgumentParser):
    p.add_argument("--config", "-c", type=str, default=None, help="Run configuration (JSON or YAML)")
    p.add_argument("--seed", type=int, default=None, help="Override the config seed")
    p.add_argument("--budget", type=int, default=None, help="Override the Monte Carlo budget")
    p.add_argument("--method", choices=["auto", "mc", "gh"], default=None, help="Override the volume method")
    p.add_argument("--out", type=str, default=None, help="Output directory (default: config output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wgsc",
        description="Numerical verification of weighted Gaussian Sobolev identities",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Full acceptance suite from one file
  python main.py run --config configs/acceptance_hyperplane.json

  # Same suite, different seed and budget
  python main.py run --config configs/acceptance_hyperplane.json --seed 7 --budget 200000

  # Gauss-Green checks only, appended to the ledger
  python main.py check gauss-green --config configs/sphere.yaml

  # Divergence checks without a config file
  python main.py check divergence --weight gaussian_type:0.05 --field coordinate:1 --budget 200000
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_overrides(sub.add_parser("run", help="Run the suite listed in a config file"))
    sub.add_parser("list-checks", help="List registered check ids")
    describe = sub.add_parser("describe", help="Print the anchor and formula of a check")
    describe.add_argument("check_id")

    check = sub.add_parser("check", help="Run one group of checks and append to the ledger")
    check.add_argument("group", choices=sorted(CHECK_GROUPS))
    _add_overrides(check)
    check.add_argument("--weight", type=str, default="unit",
                       help="Weight as kind[:value], e.g. gaussian_type:0.05 (used without --config)")
    check.add_argument("--field", type=str, default=None,
                       help="Named field for f, e.g. coordinate:1 or norm_q:1.5 (used without --config)")
    check.add_argument("--spectrum", type=str, default=DEFAULT_SPECTRUM,
                       help="Comma-separated covariance eigenvalues (used without --config)")
    return parser


# ============================================================
# Config loading
# ============================================================

def load_config(path: str) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"File not found: {path}")
    text = p.read_text()
    try:
        data = yaml.safe_load(text) if p.suffix in (".yaml", ".yml") else json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f":{mark.line + 1}:{mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}{where}: {e}")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        lines = [f"  {'.'.join(str(x) for x in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError(f"{path}: invalid configuration\n" + "\n".join(lines))


def config_from_options(args) -> RunConfig:
    """RunConfig for `check` when no --config is given: default model, --weight, --field."""
    kind, _, value = args.weight.partition(":")
    weight: dict = {"kind": kind}
    if value:
        if kind not in WEIGHT_PARAMS:
            raise ConfigError(f"weight '{kind}' takes no parameter, got '{args.weight}'")
        weight[WEIGHT_PARAMS[kind]] = value
    try:
        spectrum = [float(x) for x in args.spectrum.split(",")]
    except ValueError:
        raise ConfigError(f"--spectrum must be comma-separated numbers, got '{args.spectrum}'")
    data = {"model": {"spectrum": spectrum}, "weight": weight, "suite": CHECK_GROUPS[args.group],
            "output": f"./output/{args.group}"}
    if args.field:
        data["fields"] = {"f": {"name": args.field}}
        data["params"] = {"bilinear": {"f": "f"}}
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        lines = [f"  {'.'.join(str(x) for x in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError("invalid --weight/--field/--spectrum\n" + "\n".join(lines))


def apply_overrides(config: RunConfig, args) -> RunConfig:
    update = {k: v for k, v in (("seed", args.seed), ("budget", args.budget), ("method", args.method),
                                ("output", args.out)) if v is not None}
    try:
        return RunConfig.model_validate({**config.model_dump(by_alias=True), **update})
    except ValidationError as e:
        raise ConfigError(str(e))


# ============================================================
# Commands
# ============================================================

def list_checks():
    table = Table(title="Registered checks")
    table.add_column("id", style="cyan")
    table.add_column("anchor")
    for spec in CHECKS.values():
        table.add_row(spec.check_id, spec.anchor)
    console.print(table)


def describe(check_id: str) -> int:
    spec = CHECKS.get(check_id)
    if spec is None:
        console.print(f"[red]Unknown check id '{check_id}'. Run list-checks.[/red]")
        return EXIT_CONFIG
    console.print(Panel(f"[bold]{spec.anchor}[/bold]\n\n{spec.formula}", title=spec.check_id, border_style="cyan"))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "list-checks":
        list_checks()
        return 0
    if args.command == "describe":
        return describe(args.check_id)

    try:
        if args.config is not None:
            config = load_config(args.config)
        elif args.command == "check":
            config = config_from_options(args)
        else:
            raise ConfigError("run needs --config")
        config = apply_overrides(config, args)
    except ConfigError as e:
        console.print(f"[red]Error: {e}[/red]")
        return EXIT_CONFIG

    if args.command == "check":
        group = CHECK_GROUPS[args.group]
        if args.group == "gauss-green" and config.surface is not None and config.surface.kind == "sphere":
            group = ["gauss_green_sphere", *group[1:]]
        config = config.model_copy(update={"suite": group})
        return run_suite(config, append=True)

    try:
        return run_suite(config)
    except KeyboardInterrupt:
        console.print("\n[yellow]⚠ Run interrupted by user.[/yellow]")
        return 130


if __name__ == "__main__":
    sys.exit(main())
