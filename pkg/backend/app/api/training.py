"""
Training Commands — seed phase, continual phase and from-scratch baselines.
"""

from app.services.pipeline_service import Workspace, train_baseline, train_continual, train_seed


def register(subparsers) -> None:
    parser = subparsers.add_parser("train-seed", help="train the seed model on the old languages")
    parser.set_defaults(handler=run_train_seed)

    parser = subparsers.add_parser("train-continual", help="continue training the grown model on all languages")
    parser.set_defaults(handler=run_train_continual)

    parser = subparsers.add_parser("train-baseline", help="train a fresh model at the baseline architecture")
    parser.set_defaults(handler=run_train_baseline)


def run_train_seed(args, ws: Workspace) -> dict:
    return train_seed(ws)


def run_train_continual(args, ws: Workspace) -> dict:
    return train_continual(ws)


def run_train_baseline(args, ws: Workspace) -> dict:
    return train_baseline(ws)
