"""Command line entry point: ``gradma {solve,verify,probe,report}``.

Exit codes: 0 converged, 2 solver abort, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .fieldio import atomic_write
from .runs import (
    EXIT_CONFIG,
    EXIT_OK,
    BundleIntegrityError,
    InadmissibleTruth,
    run_manufactured,
    run_probe,
    run_report,
    run_solve,
)
from .torus import set_workers

log = logging.getLogger("gradma")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradma", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve the configured problem"),
        ("verify", "manufactured-solution check against the config's 'truth'"),
        ("probe", "solve, then re-solve from perturbed schedules and warm starts"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, type=Path)
        cmd.add_argument("--out", type=Path, help="bundle directory (overrides outputs.dir)")
        cmd.add_argument("--threads", type=int, default=None)
        cmd.add_argument("--strict", action="store_true", help="reject unknown config keys")
    rep = sub.add_parser("report", help="summarize a bundle and write plot data")
    rep.add_argument("bundle", type=Path)
    rep.add_argument("--out", type=Path, help="directory for report.txt / plot.csv (default: the bundle)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command == "report":
        try:
            text, table = run_report(args.bundle)
        except BundleIntegrityError as exc:
            print(f"integrity failure: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        out = args.out or args.bundle
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / "report.txt", text.encode("utf-8"))
        atomic_write(out / "plot.csv", table.encode("utf-8"))
        sys.stdout.write(text)
        return EXIT_OK

    set_workers(args.threads)
    try:
        cfg = parse_config(args.config.read_bytes(), strict=args.strict)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out is None and cfg.out_dir is None:
        print("config error: no output directory (use --out or outputs.dir)", file=sys.stderr)
        return EXIT_CONFIG

    runner = {"solve": run_solve, "verify": run_manufactured, "probe": run_probe}[args.command]
    try:
        bundle = runner(cfg, args.out)
    except (InadmissibleTruth, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = {
        "status": bundle.metadata["status"],
        "b": bundle.metadata["b"],
        "residual": bundle.metadata["residual"],
        "bundle": str(bundle.path),
    }
    summary.update({k: v for k, v in bundle.extras.items() if k == "verification"})
    print(json.dumps(summary, indent=2, sort_keys=True))
    return bundle.exit_code


if __name__ == "__main__":
    sys.exit(main())
