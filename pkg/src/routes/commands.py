"""
Command-line routes: one subcommand per controller method
"""

import argparse
from typing import List, Optional

import src.config.env as env
from src.app.controllers.simulation_controller import SimulationController
from src.app.schemas.run_config_schema import RunConfig, load_run_config
from src.app.services.storage_service import StorageService

COMMANDS = tuple(SimulationController.COMMANDS)

HELP = {
    "spectrum": "Level statistics, density of states, zero modes and ground state",
    "entanglement-scan": "Entropy per cut, zero-entropy census and separable eigenstates",
    "quench": "Fidelity revivals and observables after a quench from a named state",
    "dw": "Domain-wall quench: density, R(t), 1/z and threshold fronts",
    "automaton": "Classical conditional-swap circuit from the domain wall",
    "fragmentation": "Basis and matrix dumps, adjacency graph, components and legs",
}


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with global flags repeated on every subcommand"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--out", help="Output directory (overrides [output].directory)")
    common.add_argument(
        "--threads",
        type=int,
        default=env.DEFAULT_THREADS,
        help="Worker and BLAS threads; 1 is the deterministic reference path",
    )
    common.add_argument("--log-level", default=None, help="Logging level (default from LOG_LEVEL)")

    parser = argparse.ArgumentParser(
        prog="east-models",
        description="Particle-conserving quantum East models: fragmentation, spectra, entanglement and dynamics",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        subparsers.add_parser(name, parents=[common], help=HELP[name])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Load the TOML file and apply command-line overrides"""
    config = load_run_config(args.config, command=args.command)
    if args.out:
        config = config.model_copy(
            update={"output": config.output.model_copy(update={"directory": args.out})}
        )
    return config


def dispatch(config: RunConfig, threads: int):
    controller = SimulationController(StorageService(config.output.directory), n_jobs=threads)
    return controller.run(config)


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        build_parser().error("--threads must be at least 1")
    return args
