"""
Experiment Commands — ablation manifests and the end-to-end pipeline.
"""

import logging
from pathlib import Path

from app.schemas.manifest import GrowthSource
from app.services.experiment_service import Ablation, ablation
from app.services.pipeline_service import (
    Workspace,
    analyze_norms,
    evaluate_stage,
    gen_data,
    fisher_stage,
    grow_stage,
    probe_forget,
    report_stage,
    train_baseline,
    train_continual,
    train_seed,
    write_manifest,
)

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("ablation", help="write a manifest with one recipe ingredient switched off")
    parser.add_argument("--axis", required=True, help=f"one of {[a.value for a in Ablation]}")
    parser.add_argument("--out", required=True, type=Path, help="path of the derived manifest")
    parser.set_defaults(handler=run_ablation)

    parser = subparsers.add_parser("run", help="every stage in order, baseline and probes included")
    parser.add_argument("--skip-baseline", action="store_true")
    parser.set_defaults(handler=run_pipeline)


def run_ablation(args, ws: Workspace) -> dict:
    derived = ablation(ws.manifest, args.axis)
    derived = derived.model_copy(update={"output_dir": f"{ws.manifest.output_dir}-{args.axis}"})
    path = write_manifest(args.out, derived)
    logger.info("Wrote %s ablation manifest to %s", args.axis, path)
    return {"manifest": str(path), "axis": args.axis}


def run_pipeline(args, ws: Workspace) -> dict:
    m = ws.manifest
    gen_data(ws)
    train_seed(ws)
    grow_stage(ws)
    if m.continual.fisher_threshold is not None:
        fisher_stage(ws)
    train_continual(ws)
    evaluate_stage(ws, "continual", curve=bool(m.continual.snapshot_every))
    probe_forget(ws)
    if m.growth_plan.widens and m.growth_source == GrowthSource.SURGERY:
        analyze_norms(ws, "continual")
    if args.skip_baseline:
        return {"stages": "done", "baseline": False}
    train_baseline(ws)
    evaluate_stage(ws, "baseline", curve=bool(m.continual.snapshot_every))
    return report_stage(ws)
