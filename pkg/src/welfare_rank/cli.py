"""Command-line entry point.

    welfare-rank <stage> --config FILE [--seed N] [--threads N] [--out DIR]
    welfare-rank validate PATH --schema NAME

Exit codes: 0 success, 2 usage or missing input artifact, 3 schema or data
violation, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import (
    ConfigurationError,
    DomainError,
    InputError,
    MissingArtifactError,
    NumericError,
    SchemaError,
    UsageError,
)

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_NUMERIC = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    from .pipeline import STAGES
    from .validate import SCHEMAS

    ap = argparse.ArgumentParser(prog="welfare-rank", description="Simulate, estimate and evaluate recommendation arms.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, metavar="stage")
    for name in (*STAGES, "all"):
        sp = sub.add_parser(name, help="run every stage in order" if name == "all" else f"run the {name} stage")
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--threads", type=int, default=None, help="cap on worker threads")
        sp.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    vp = sub.add_parser("validate", help="check a CSV artifact against a schema")
    vp.add_argument("path")
    vp.add_argument("--schema", required=True, choices=sorted(SCHEMAS))
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            from .validate import validate_dataset

            rep = validate_dataset(args.path, args.schema)
            print(rep)
            return EXIT_OK if rep.ok else EXIT_SCHEMA
        from .config import load_config
        from .pipeline import run_pipeline

        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        cfg = load_config(args.config).with_overrides(args.seed, args.threads, args.out)
        run = run_pipeline(cfg, args.command)
        print(f"{args.command}: artifacts in {run.root}")
        return EXIT_OK
    except (UsageError, ConfigurationError, MissingArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, InputError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
