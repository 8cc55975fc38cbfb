"""
Probe Commands — forgetting probe, FFN norm drift and Fisher information.
"""

from app.services.pipeline_service import Workspace, analyze_norms, fisher_stage, probe_forget


def register(subparsers) -> None:
    parser = subparsers.add_parser("probe-forget", help="embedding-substitution forgetting probe")
    parser.set_defaults(handler=run_probe_forget)

    parser = subparsers.add_parser("analyze-norms", help="Frobenius drift of widened FFN matrices")
    parser.add_argument("--checkpoint", default="continual", choices=["grown", "continual"])
    parser.set_defaults(handler=run_analyze_norms)

    parser = subparsers.add_parser("fisher", help="per-token Fisher information of the grown model")
    parser.set_defaults(handler=run_fisher)


def run_probe_forget(args, ws: Workspace) -> dict:
    return probe_forget(ws)


def run_analyze_norms(args, ws: Workspace) -> dict:
    return analyze_norms(ws, args.checkpoint)


def run_fisher(args, ws: Workspace) -> dict:
    return fisher_stage(ws)
