"""
Evaluation Commands — test-set scoring, comparison tables and compute savings.
"""

from pathlib import Path

from app.services.pipeline_service import CHECKPOINT_STAGES, Workspace, evaluate_stage, report_stage


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="score a checkpoint on every test direction")
    parser.add_argument("--checkpoint", default="continual", choices=sorted(CHECKPOINT_STAGES))
    parser.add_argument("--curve", action="store_true", help="also score the run's snapshots")
    parser.set_defaults(handler=run_evaluate)

    parser = subparsers.add_parser("report", help="compare two evaluation reports")
    parser.add_argument(
        "--compare", nargs=2, metavar=("BASELINE", "CANDIDATE"), type=Path, default=None,
        help="evaluation report JSON files (default: baseline vs continual)",
    )
    parser.set_defaults(handler=run_report)


def run_evaluate(args, ws: Workspace) -> dict:
    return evaluate_stage(ws, args.checkpoint, args.curve)


def run_report(args, ws: Workspace) -> dict:
    if args.compare:
        return report_stage(ws, args.compare[0], args.compare[1])
    return report_stage(ws)
