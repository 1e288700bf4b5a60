"""Batch command-line front end for the experiment harnesses.

Exit codes: 0 success, 2 invariant failure, 3 configuration error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, NumericalError, QBoltzError
from .experiments import (
    parse_config_file,
    resolve_config,
    run_ap_decay,
    run_convergence,
    run_equilibrium_check,
    run_sod,
)

_RUNNERS = {
    "sod": run_sod,
    "convergence": run_convergence,
    "ap-decay": run_ap_decay,
    "equilibrium-check": run_equilibrium_check,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qboltz",
        description="Kinetic solver experiments for quantum (Bose/Fermi) gases")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, runner in _RUNNERS.items():
        p = sub.add_parser(name, help=runner.__doc__.splitlines()[0].lower()
                           if runner.__doc__ else None)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration entry (repeatable)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for the collision evaluation")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, val = item.split("=", 1)
            overrides[key.strip()] = val.strip()
        cfg = resolve_config(file_values, overrides)
        if args.threads is not None:
            import numba

            numba.set_num_threads(max(1, args.threads))
        result = _RUNNERS[args.experiment](cfg, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except QBoltzError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4

    if args.experiment == "equilibrium-check" and not result.get("passed", True):
        print("equilibrium-check: invariant failures detected", file=sys.stderr)
        return 2
    if args.experiment == "ap-decay" and not result.get("ordered", True):
        print("ap-decay: norm series are not strictly ordered", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
