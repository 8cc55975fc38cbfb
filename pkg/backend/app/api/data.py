"""
Data Commands — synthetic corpora and vocabularies.
"""

from app.services.pipeline_service import Workspace, gen_data


def register(subparsers) -> None:
    parser = subparsers.add_parser("gen-data", help="generate train/dev/test corpora and vocabularies")
    parser.set_defaults(handler=run_gen_data)


def run_gen_data(args, ws: Workspace) -> dict:
    return gen_data(ws)
