"""Command-line front-end: ``attcal simulate | fit | report``."""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .calibrate import THERMOMETER_CONVENTIONS
from .config import ConfigError, FitConfig, SimulateConfig, ThermometerConfig, from_dict, load_document
from .pipeline import MANIFEST_FILE, REPORT_FILE, FitFailure, file_digest, fit, format_report, simulate
from .records import SchemaError, read_json, write_json

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_FIT = 0, 2, 3, 4

log = logging.getLogger("attcal")


def _parser():
    ap = argparse.ArgumentParser(prog="attcal", description=__doc__)
    ap.add_argument("--version", action="version", version=f"attcal {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="synthesize PSD, transient and IQ records from a scenario")
    sim.add_argument("--config", help="scenario YAML/JSON; omitted keys take the device-preset values")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.add_argument("--out-dir", default="records")
    sim.add_argument("--jobs", type=int, default=1)

    f = sub.add_parser("fit", help="run the estimators on a record manifest")
    f.add_argument("--config", required=True, help="fit manifest (as written by simulate)")
    f.add_argument("--out-dir", help="where to write report.json (default: next to the manifest)")
    f.add_argument("--window-min-dbm", type=float)
    f.add_argument("--window-max-dbm", type=float)
    f.add_argument("--convention", choices=THERMOMETER_CONVENTIONS)
    f.add_argument("--seed", type=int, help="bootstrap seed")
    f.add_argument("--jobs", type=int, default=1)

    r = sub.add_parser("report", help="print the calibration table of a report document")
    r.add_argument("path")
    return ap


def cmd_simulate(args):
    cfg = from_dict(SimulateConfig, load_document(args.config) if args.config else {})
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = Path(args.out_dir)
    try:
        simulate(cfg, out, jobs=args.jobs)
    except OSError as exc:
        print(f"attcal simulate: cannot write to {out}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote records and {MANIFEST_FILE} to {out}")
    return EXIT_OK


def cmd_fit(args):
    manifest = Path(args.config)
    cfg = from_dict(FitConfig, load_document(manifest), where=str(manifest))
    if args.window_min_dbm is not None:
        cfg.window.min_dbm = args.window_min_dbm
    if args.window_max_dbm is not None:
        cfg.window.max_dbm = args.window_max_dbm
    if args.convention is not None:
        cfg.thermometer = dataclasses.replace(cfg.thermometer or ThermometerConfig(), convention=args.convention)
    if args.seed is not None:
        cfg.bootstrap.seed = args.seed
    provenance = {"manifest_sha256": file_digest(manifest)}
    doc = fit(cfg, manifest.parent, jobs=args.jobs, provenance=provenance)
    out_dir = Path(args.out_dir) if args.out_dir else manifest.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / REPORT_FILE, doc)
    print(format_report(doc))
    return EXIT_OK


def cmd_report(args):
    doc = read_json(args.path)
    try:
        text = format_report(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(args.path, f"malformed report document ({type(exc).__name__}: {exc})") from None
    print(text)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "report": cmd_report}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    args = _parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("attcal: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"attcal {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"attcal {args.command}: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FitFailure as exc:
        print(f"attcal {args.command}: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as exc:
        # invalid physical parameters surface as ValueError from the model constructors
        print(f"attcal {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
