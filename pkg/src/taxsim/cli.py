"""Command line entry point: ``taxsim <subcommand> ...``.

Exit status is 0 on success, 1 for configuration errors and 2 for errors
raised while running an experiment.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from pathlib import Path

from . import io as tio
from .harness import (
    find_critical_initial_fraction,
    run_adaptive,
    single_run_rng,
    sweep_fraction,
    sweep_parameter,
)
from .model import InvalidParam, TaxsimError, validate
from .network import Topology, build_graph

log = logging.getLogger("taxsim")

SUBCOMMANDS = {
    "sweep-fraction": "fraction-sweep",
    "run": "adaptive-run",
    "find-threshold": "critical-fraction",
    "sweep-param": "param-sweep",
}


class ConfigError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (flat key = value, INI sections)")
    p.add_argument("--seed", type=int, help="master seed (or TAXSIM_SEED, or seed in [params])")
    p.add_argument("--out", help="output directory")
    p.add_argument("--name", help="base name of the output files")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for replicas")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any parameter or option")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taxsim", description="Tax evasion agent-based simulations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-fraction", help="final capitals versus taxpayer share, fixed categories")
    _common(p)
    p.add_argument("--rescale", action="store_true", default=None, help="shift curves so that f=0 sits at zero")
    p.add_argument("--replicas", type=int)

    p = sub.add_parser("run", help="single adaptive run on the social graph")
    _common(p)
    p.add_argument("--initial-taxpayers", type=float)
    p.add_argument("--initial-mixed", type=float)
    p.add_argument("--turns", type=int)
    p.add_argument("--topology", choices=[t.value for t in Topology])

    p = sub.add_parser("find-threshold", help="critical initial taxpayer share")
    _common(p)
    p.add_argument("--replicas", type=int)
    p.add_argument("--turns", type=int)
    p.add_argument("--IF", dest="imitation_factor_IF", type=float)
    p.add_argument("--CF", dest="capital_factor_CF", type=float)

    p = sub.add_parser("sweep-param", help="adaptive sweep of tax, penalty or audit probability")
    _common(p)
    p.add_argument("--axis", choices=["tax_d", "penalty_h", "audit_p"])
    p.add_argument("--replicas", type=int)
    p.add_argument("--turns", type=int)
    p.add_argument("--initial-taxpayers", type=float)

    p = sub.add_parser("validate-config", help="check a config file and exit")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", choices=list(tio.KINDS), help="experiment section to check (default: all present)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


_FLAG_KEYS = (
    "rescale", "replicas", "initial_taxpayers", "initial_mixed", "turns",
    "topology", "imitation_factor_IF", "capital_factor_CF", "axis",
)


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = str(value)
    env_seed = os.environ.get("TAXSIM_SEED")
    if env_seed is not None:
        out["seed"] = env_seed
    if args.seed is not None:
        out["seed"] = str(args.seed)
    if args.out is not None:
        out["output_dir"] = args.out
    if args.name is not None:
        out["name"] = args.name
    return out


def _load(args: argparse.Namespace, kind: str) -> tio.ExperimentConfig:
    try:
        config = tio.load_config(args.config, kind, _overrides(args))
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not config.seed_given:
        raise ConfigError("seed: no --seed, no TAXSIM_SEED and no seed in [params]")
    validate(config.params, strict_game=kind != "param-sweep")
    return config


def _run(args: argparse.Namespace, config: tio.ExperimentConfig) -> list[Path]:
    opts, params = config.options, config.params
    sub = args.command
    files: dict[str, str] = {}
    extra: dict[str, object] = {}
    if sub == "sweep-fraction":
        curve, report = sweep_fraction(params, opts["rescale"], opts["replicas"], opts["grid"], args.jobs)
        body = tio.fraction_sweep_table(curve, report)
        extra["rescale_offset"] = curve.offset
    elif sub == "run":
        rng = single_run_rng(params.seed)
        graph = build_graph(params.n_players, opts["topology"], params.rewire_r, rng)
        result = run_adaptive(params, config.initial_fractions, graph, opts["turns"], rng)
        body = tio.run_table(result)
        if not graph.fully_connected:
            files[f"{config.name}.edges"] = tio.edge_list_text(graph)
    elif sub == "find-threshold":
        crit = find_critical_initial_fraction(
            params, replicas=opts["replicas"], grid=opts["grid"], turns=opts["turns"],
            resolution=opts["resolution"], jobs=args.jobs,
        )
        body = tio.critical_table(crit)
        extra["init_believeness"] = crit.init_believeness
    else:
        curve = sweep_parameter(
            params, opts["axis"], opts["grid"], config.initial_fractions, opts["replicas"], opts["turns"], args.jobs
        )
        body = tio.param_sweep_table(curve)
    files[f"{config.name}.csv"] = tio.csv_text(config, sub, body)
    files[f"{config.name}.meta"] = tio.meta_text(config, sub, extra)
    return tio.write_outputs(config.output_dir, files)


def _validate_only(args: argparse.Namespace) -> None:
    try:
        text = Path(args.config).read_text()
        cp = tio._reader()
        cp.read_string(text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    kinds = [args.kind] if args.kind else [k for k in tio.KINDS if cp.has_section(k)] or ["fraction-sweep"]
    for kind in kinds:
        config = tio.parse_config(text, kind)
        validate(config.params, strict_game=kind != "param-sweep")
        print(f"{kind}: ok (config_hash {config.config_hash()})")


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
    )
    try:
        if args.command == "validate-config":
            _validate_only(args)
            return 0
        config = _load(args, SUBCOMMANDS[args.command])
    except InvalidParam as exc:
        print(f"config error: {exc.name}: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        for path in _run(args, config):
            log.info("wrote %s", path)
    except (TaxsimError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
