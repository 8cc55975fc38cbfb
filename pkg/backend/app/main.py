"""
MTGrow — Command-Line Entry Point

    python -m app.main --manifest manifest.json <command> [options]

Commands (one per pipeline stage):
- gen-data, train-seed, grow, fisher, train-continual, train-baseline
- evaluate, probe-forget, analyze-norms, report
- ablation (writes a derived manifest), run (every stage in order)

Exit codes: 0 on success, 1 on an unexpected exception, otherwise the
exit_code of the MTGrowError subclass that stopped the command.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from app.api import data, evaluation, experiments, probes, surgery, training
from app.config import settings
from app.exceptions import MTGrowError
from app.services.experiment_service import load_manifest
from app.services.pipeline_service import Workspace

logger = logging.getLogger("app")

COMMAND_MODULES = (data, training, surgery, probes, evaluation, experiments)


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=settings.LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtgrow",
        description="Grow a multilingual translation model to new languages and capacity.",
    )
    parser.add_argument("--manifest", type=Path, default=Path("manifest.json"), help="experiment manifest (JSON)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
        help="override a manifest leaf by dotted path; VALUE is parsed as JSON",
    )
    parser.add_argument("--output-root", type=Path, default=None, help="overrides OUTPUT_ROOT")
    parser.add_argument("--log-level", default=None)

    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        manifest = load_manifest(args.manifest, args.overrides)
        root = args.output_root / manifest.output_dir if args.output_root else None
        ws = Workspace(manifest, root)
        result = args.handler(args, ws)
    except MTGrowError as exc:
        logger.error("%s failed: %s", args.command, exc.detail)
        return exc.exit_code
    except Exception:
        logger.exception("%s failed unexpectedly", args.command)
        return 1

    print(json.dumps(result, sort_keys=True, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
