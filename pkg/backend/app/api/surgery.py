"""
Surgery Commands — grow the seed checkpoint into the continual-phase model.
"""

from app.services.pipeline_service import Workspace, grow_stage


def register(subparsers) -> None:
    parser = subparsers.add_parser("grow", help="grow the seed checkpoint (vocabulary, width, depth)")
    parser.add_argument("--plan", default=None, help="name of a manifest growth plan (default: manifest.plan)")
    parser.set_defaults(handler=run_grow)


def run_grow(args, ws: Workspace) -> dict:
    return grow_stage(ws, args.plan)
