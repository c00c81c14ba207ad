"""Command-line front end: ``bomdlab <solver> --config run.toml --out DIR``.

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 resolution or quadrature self-check failure.
"""

import argparse
import sys

from ..errors import BomdlabError, ConfigError, InvalidInputError, SelfCheckError
from .compare import ComparisonReport, build_report, compare_mu_limit
from .config import RunConfig, load_config, parse_config
from .plots import emit_plots
from .runner import RunResult, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SELF_CHECK = 0, 2, 3, 4

__all__ = ["ComparisonReport", "RunConfig", "RunResult", "build_report", "compare_mu_limit",
           "emit_plots", "load_config", "main", "parse_config", "run"]


def _parser():
    parser = argparse.ArgumentParser(prog="bomdlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("bomd", "bohmion", "koopmon", "tdse", "compare"):
        p = sub.add_parser(name, help=f"run the {name} solver")
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p = sub.add_parser("plot", help="render SVG plots for a finished run")
    p.add_argument("--out", required=True, help="run directory to plot")
    return parser


def exit_code(exc) -> int:
    if isinstance(exc, SelfCheckError):
        return EXIT_SELF_CHECK
    if isinstance(exc, (ConfigError, InvalidInputError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "plot":
            for path in emit_plots(args.out):
                print(path)
            return EXIT_OK
        if args.seed is not None and args.seed < 0:
            raise ConfigError("must be a non-negative integer", "--seed")
        cfg = load_config(args.config, args.command, args.seed)
        result = run(cfg, args.out)
        print(f"wrote {len(result.manifest['files'])} files to {args.out}")
        if cfg.solver == "compare":
            report = build_report(args.out)
            print(f"mu-limit comparison {'passed' if report.passed else 'failed'}")
        return EXIT_OK
    except BomdlabError as exc:
        print(f"bomdlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)
