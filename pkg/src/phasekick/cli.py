"""Command-line entry point.

Exit codes: 0 success (compare: bundles match), 1 compare found numeric
differences, 2 the factor-M bound was violated, 3 the integration diverged or
hit the momentum boundary, 4 configuration problems (bad TOML, unknown
preset, invalid parameters, structurally incomparable bundles).
"""

import argparse
import sys

from .config import canonical_toml, load_config, preset, preset_names
from .errors import (
    BoundaryError,
    ConfigError,
    IncompatibleBundlesError,
    IntegrationDivergedError,
    InvalidParameterError,
    UnknownPresetError,
)
from .harness import compare, run

EXIT_OK = 0
EXIT_DIFFERS = 1
EXIT_BOUND = 2
EXIT_DIVERGED = 3
EXIT_CONFIG = 4


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="phasekick",
        description="laser-kicked two-level atoms: exact quantum vs test particles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment and write its bundle")
    src = p_run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="built-in configuration name")
    src.add_argument("--config", help="path to a TOML configuration")
    p_run.add_argument("--out", required=True, help="bundle output directory")
    p_run.add_argument("--dt", type=float, help="override integrator step")
    p_run.add_argument("--particles", type=int, help="override ensemble size")
    p_run.add_argument("--seed", type=int, help="override ensemble seed")
    p_run.add_argument("--threads", type=int, default=1,
                       help="ensemble worker threads (never affects results)")

    p_pre = sub.add_parser("preset", help="list or show built-in configurations")
    act = p_pre.add_mutually_exclusive_group(required=True)
    act.add_argument("--list", action="store_true", help="list preset names")
    act.add_argument("--show", metavar="NAME", help="print a preset as TOML")

    p_cmp = sub.add_parser("compare", help="compare two bundle directories")
    p_cmp.add_argument("bundle_a")
    p_cmp.add_argument("bundle_b")
    p_cmp.add_argument("--field-tol", type=float, default=1e-6)
    p_cmp.add_argument("--report-tol", type=float, default=1e-6)
    p_cmp.add_argument("--histogram-tol", type=float, default=1e-2)
    return parser


def _cmd_run(args):
    if args.preset is not None:
        cfg = preset(args.preset)
    else:
        cfg = load_config(args.config)
    cfg = cfg.override(dt=args.dt, particles=args.particles, seed=args.seed)
    result = run(cfg, out_dir=args.out, threads=args.threads)
    for line in result.bound.lines():
        print(line)
    print(f"bundle: {result.out_dir}")
    return EXIT_OK if result.passed else EXIT_BOUND


def _cmd_preset(args):
    if args.list:
        for name, desc in sorted(preset_names().items()):
            print(f"{name}: {desc}")
        return EXIT_OK
    print(canonical_toml(preset(args.show)), end="")
    return EXIT_OK


def _cmd_compare(args):
    result = compare(
        args.bundle_a, args.bundle_b,
        field_tol=args.field_tol,
        report_tol=args.report_tol,
        histogram_tol=args.histogram_tol,
    )
    for line in result.lines():
        print(line)
    return EXIT_OK if result.matches else EXIT_DIFFERS


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "preset": _cmd_preset, "compare": _cmd_compare}[
        args.command
    ]
    try:
        return handler(args)
    except (IntegrationDivergedError, BoundaryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, UnknownPresetError, InvalidParameterError,
            IncompatibleBundlesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
