"""Command-line entry point: ``sirwave <mode> --config FILE [--out DIR] [--override K=V ...]``.

Exit codes: 0 all certificates pass, 1 a certificate or precondition failed,
2 usage or configuration error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import MODES, apply_overrides, config_from_dict, read_config_dict
from .errors import ConfigError
from .pipeline import run_mode
from .report import emit_report

log = logging.getLogger("sirwave")

EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sirwave", description="Traveling waves of a lattice SIR model.")
    sub = parser.add_subparsers(dest="mode", required=True, metavar="MODE")
    for mode in MODES:
        cmd = sub.add_parser(mode, help=f"run the {mode} stage" if mode != "full-pipeline" else "run every stage")
        cmd.add_argument("--config", help="JSON configuration file (defaults apply when omitted)")
        cmd.add_argument("--out", help="output directory (overrides output_dir)")
        cmd.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                         help="set a dot-path config entry, e.g. params.beta=3 (repeatable)")
        cmd.add_argument("--plots", action="store_true", help="also render PNG figures")
        cmd.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        data = read_config_dict(args.config) if args.config else {}
        data = apply_overrides(data, args.override)
        file_mode = data.get("mode")
        if file_mode is not None and file_mode != args.mode:
            log.info("config mode %r replaced by command %r", file_mode, args.mode)
        data["mode"] = args.mode
        if args.plots:
            data["emit_plots"] = True
        cfg = config_from_dict(data)
    except (ConfigError, OSError) as exc:
        print(f"sirwave: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = args.out or cfg.output_dir
    result = run_mode(cfg)
    try:
        files = emit_report(result, out_dir, plots=cfg.emit_plots)
    except OSError as exc:
        print(f"sirwave: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log.info("wrote %d files to %s", len(files), out_dir)
    for cert in result.certificates:
        log.info("%-40s %s  value=%.6g  threshold=%.6g", cert.name, "pass" if cert.passed else "FAIL",
                 cert.value, cert.threshold)
    code = result.exit_code
    if result.error:
        print(f"sirwave: {result.error}", file=sys.stderr)
    elif code:
        print(f"sirwave: certificate failed: {result.first_failure}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
