"""Command line entry point.

    pamgap ladder --modes 8 --eps 0.2,0.1,0.05,0.025 --format csv --out ladder.csv
    pamgap first-order --config run.json --seeds 1-3
    pamgap k-convergence --eps 0.1
    pamgap correction --time 0.5 --diag-modes 64

Exit codes: 0 success, 2 configuration error, 3 numerical failure in a cell.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import (
    FORMATS,
    ExperimentConfig,
    emit,
    run_correction,
    run_first_order_check,
    run_k_convergence,
    run_ladder,
)
from .wick import SCHEMES, ConfigError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _seeds(text: str) -> tuple[int, ...]:
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc
    return tuple(out)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--modes", dest="K", type=int)
    common.add_argument("--diag-modes", dest="K_diag", type=int)
    common.add_argument("--chaos-order", dest="N", type=int)
    common.add_argument("--time", dest="time", type=_floats,
                        help="horizon T, or a comma list of report times ending at T")
    common.add_argument("--x-grid", dest="x_grid", type=_floats)
    common.add_argument("--eps", dest="eps_ladder", type=_floats)
    common.add_argument("--seeds", type=_seeds, help="e.g. 1-5 or 3,7,11")
    common.add_argument("--phi", help="sin, bump, or comma-separated coefficients")
    common.add_argument("--steps", dest="steps_per_interval", type=int)
    common.add_argument("--gamma", type=float)
    common.add_argument("--scheme", choices=SCHEMES)
    common.add_argument("--workers", type=int)
    common.add_argument("--format", choices=FORMATS, default="csv")
    common.add_argument("--out", default="-", help="output path, '-' for stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pamgap", description=__doc__.split("\n")[0] if __doc__ else None)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ladder", parents=[common], help="eps ladder of Wick vs Stratonovich gaps")
    sub.add_parser("first-order", parents=[common], help="first series term by three paths")
    sub.add_parser("k-convergence", parents=[common], help="Stratonovich flow at K, 2K, 4K")
    sub.add_parser("correction", parents=[common], help="deterministic eps^2 correction field")
    return p


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for key in ("K", "K_diag", "N", "x_grid", "eps_ladder", "seeds", "steps_per_interval",
                "gamma", "scheme", "workers"):
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    if args.time is not None:
        if not args.time:
            raise ConfigError("--time needs at least one value")
        base["T"] = args.time[-1]
        base["t_report"] = args.time if len(args.time) > 1 else None
    if args.phi is not None:
        if args.phi in ("sin", "bump"):
            base["phi"] = args.phi
        else:
            try:
                base["phi_coeffs"] = _floats(args.phi)
            except argparse.ArgumentTypeError as exc:
                raise ConfigError(str(exc)) from exc
            base["phi"] = "coeffs"
    try:
        return ExperimentConfig.from_dict(base).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


RUNNERS = {
    "ladder": run_ladder,
    "first-order": run_first_order_check,
    "k-convergence": run_k_convergence,
    "correction": run_correction,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = build_config(args)
        report = RUNNERS[args.command](config)
    except ConfigError as exc:
        print(f"pamgap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emit(report, args.format, args.out)
    except OSError as exc:
        print(f"pamgap: {exc}", file=sys.stderr)
        return 1
    if report.failures:
        print(f"pamgap: {report.failures} cell(s) failed numerically", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0
