"""
Pipeline Service — the experiment stages behind the CLI commands.

Output layout under OUTPUT_ROOT/<manifest.output_dir>:

    data/{train,dev,test}/eng-<code>.tsv   parallel corpora (X→eng is the swap)
    data/vocab_seed.txt, vocab_full.txt    one token per line
    checkpoints/*.ckpt, *_snapshots/       model checkpoints
    logs/*.csv                             per-step training logs
    reports/*.json, *.csv                  evaluation, probe and analysis reports
    stamps/<stage>.json                    provenance stamp per stage
    ledger.jsonl                           hash-chained stage ledger

Every stage checks its upstream stamps with the stage guard, writes its
outputs, then a stamp (manifest hash, seed, code version, input and output
hashes, no timestamps) and one ledger entry.
"""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from app.config import settings
from app.exceptions import ConfigError, StageDependencyError
from app.middleware.stage_guard import require_artifact_stamp, require_stages, stamp_path
from app.models.checkpoint import Checkpoint, from_params
from app.models.param_group import ParamGroup, split_groups
from app.models.vocab import Vocab, tag_token
from app.schemas.data import PIVOT, DirectionSpec, direction_name
from app.schemas.growth import SurgeryReport
from app.schemas.manifest import ExperimentManifest, GrowthSource
from app.schemas.report import ADDED, ORIG, ComparisonReport, CurvePoint, EvalReport
from app.schemas.training import TrainConfig
from app.services import checkpoint_store
from app.services.audit_service import LEDGER_FILE, append_entry
from app.services.evaluation_service import compare, compute_savings, evaluate, report_to_csv
from app.services.experiment_service import effective_alpha, manifest_hash
from app.services.fisher_service import fisher, fisher_groups, load_fisher, save_fisher
from app.services.hash_service import hash_file, stable_seed
from app.services.probe_service import drift_to_csv, forgetting_probe, norm_drift
from app.services.sampler import batches_of
from app.services.surgery_service import fresh_growth, grow, plan_config
from app.services.synth_data import (
    gen_corpus,
    held_out_pairs,
    pair_hashes,
    read_corpus,
    swap_sides,
    tier_size,
    token_counts_by_language,
    write_corpus,
)
from app.services.tokenizer_service import build_vocab
from app.services.trainer import TrainingResult, train
from app.services.transformer_service import init_model
from app.utils.helpers import canonical_json, read_json, write_json, write_text

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
CHECKPOINT_STAGES = {
    "seed": "train-seed",
    "grown": "grow",
    "continual": "train-continual",
    "baseline": "train-baseline",
}
FISHER_BATCH_PAIRS = 8


class Workspace:
    """Paths of one manifest's outputs."""

    def __init__(self, manifest: ExperimentManifest, root: Optional[Path] = None):
        self.manifest = manifest
        self.root = Path(root) if root is not None else Path(settings.OUTPUT_ROOT) / manifest.output_dir
        self.manifest_hash = manifest_hash(manifest)

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def corpus(self, split: str, code: str) -> Path:
        return self.path("data", split, f"{direction_name(PIVOT, code)}.tsv")

    def vocab_file(self, which: str) -> Path:
        return self.path("data", f"vocab_{which}.txt")

    def checkpoint(self, name: str) -> Path:
        return self.path("checkpoints", f"{name}.ckpt")

    def report(self, name: str) -> Path:
        return self.path("reports", name)

    def relative(self, path: Path) -> str:
        return Path(path).relative_to(self.root).as_posix()


# ------- Stage plumbing -------

def _run_stage(
    ws: Workspace,
    stage: str,
    requires: Sequence[str],
    body: Callable[[], List[Path]],
    extra: Optional[dict] = None,
) -> dict:
    upstream = require_stages(ws.root, ws.manifest_hash, *requires)
    inputs: Dict[str, str] = {}
    for stamp in upstream:
        inputs.update(stamp.get("outputs", {}))

    logger.info("Stage %s starting in %s", stage, ws.root)
    outputs = body()
    stamp = {
        "stage": stage,
        "manifest": ws.manifest.name,
        "manifest_hash": ws.manifest_hash,
        "seed": ws.manifest.seed,
        "code_version": settings.CODE_VERSION,
        "inputs": dict(sorted(inputs.items())),
        "outputs": {ws.relative(p): hash_file(p) for p in sorted(set(outputs))},
        "extra": extra or {},
    }
    path = write_json(stamp_path(ws.root, stage), stamp)
    append_entry(ws.path(LEDGER_FILE), stage, ws.manifest_hash, hash_file(path))
    logger.info("Stage %s finished: %d outputs", stage, len(stamp["outputs"]))
    return stamp


def _write_vocab(path: Path, vocab: Vocab) -> Path:
    return write_text(path, "".join(f"{token}\n" for token in vocab.tokens))


def read_vocab(path: Path) -> Vocab:
    with open(path, encoding="utf-8") as fh:
        return Vocab([line.rstrip("\n") for line in fh if line.rstrip("\n")])


def load_directions(ws: Workspace, codes: Sequence[str], split: str) -> List[DirectionSpec]:
    """eng→X and X→eng for every code, read from the split's corpora."""
    out = []
    for code in sorted(codes):
        spec = ws.manifest.language(code)
        pairs = read_corpus(ws.corpus(split, code))
        out.append(DirectionSpec(source=PIVOT, target=code, tier=spec.tier, pairs=pairs))
        out.append(DirectionSpec(source=code, target=PIVOT, tier=spec.tier, pairs=swap_sides(pairs)))
    return out


def _save_training(ws: Workspace, run: str, result: TrainingResult) -> List[Path]:
    outputs = [
        checkpoint_store.save(result.best, ws.checkpoint(run)),
        write_text(ws.path("logs", f"{run}_train.csv"), result.to_csv()),
    ]
    return outputs + list(result.snapshots)


def _snapshot_dir(ws: Workspace, run: str, config) -> Optional[Path]:
    if not config.snapshot_every:
        return None
    path = ws.path("checkpoints", f"{run}_snapshots")
    path.mkdir(parents=True, exist_ok=True)
    return path


# ------- Stages -------

def gen_data(ws: Workspace) -> dict:
    """Synthetic train/dev/test corpora for every language, then both vocabularies."""
    m = ws.manifest

    def body() -> List[Path]:
        outputs = []
        for code in sorted(m.old_languages + m.new_languages):
            spec = m.language(code)
            forward, _ = gen_corpus(spec, tier_size(spec.tier, m.data.tier_scale), m.seed)
            seen = pair_hashes(forward.pairs)
            dev = held_out_pairs(spec, m.data.dev_pairs, m.seed, "dev", seen)
            seen |= pair_hashes(dev)
            test = held_out_pairs(spec, m.data.test_pairs, m.seed, "test", seen)
            for split, pairs in zip(SPLITS, (forward.pairs, dev, test)):
                outputs.append(write_corpus(ws.corpus(split, code), pairs))
            logger.info("%s (%s): %d train pairs", code, spec.tier.value, forward.size)

        for which, codes in (("seed", m.old_languages), ("full", m.old_languages + m.new_languages)):
            counts = token_counts_by_language(load_directions(ws, codes, "train"))
            vocab = build_vocab(sorted(counts.items()), m.vocab.size, m.vocab.temperature)
            outputs.append(_write_vocab(ws.vocab_file(which), vocab))
        return outputs

    return _run_stage(ws, "gen-data", [], body)


def train_seed(ws: Workspace) -> dict:
    m = ws.manifest

    def body() -> List[Path]:
        vocab = read_vocab(ws.vocab_file("seed"))
        config = m.model.model_copy(update={"vocab_size": vocab.size})
        ckpt = from_params(config, vocab, init_model(config, stable_seed(m.seed, "seed-init")))
        result = train(
            ckpt,
            load_directions(ws, m.old_languages, "train"),
            m.seed_training,
            val_directions=load_directions(ws, m.old_languages, "dev"),
            languages=m.old_languages,
            snapshot_dir=_snapshot_dir(ws, "seed", m.seed_training),
        )
        return _save_training(ws, "seed", result)

    return _run_stage(ws, "train-seed", ["gen-data"], body)


def grow_stage(ws: Workspace, plan_name: Optional[str] = None) -> dict:
    """Grow the seed checkpoint under `plan_name` (default: the manifest's plan)."""
    m = ws.manifest
    plan_name = plan_name or m.plan
    if plan_name not in m.plans:
        raise ConfigError(f"unknown growth plan '{plan_name}'; manifest defines {sorted(m.plans)}")

    def body() -> List[Path]:
        seed_ckpt = checkpoint_store.load(ws.checkpoint("seed"))
        grown, report = grow_model(m, seed_ckpt, read_vocab(ws.vocab_file("full")), plan_name)
        return [
            checkpoint_store.save(grown, ws.checkpoint("grown")),
            write_json(ws.report("surgery.json"), report.model_dump(mode="json")),
        ]

    return _run_stage(ws, "grow", ["train-seed"], body, extra={"plan": plan_name})


def fisher_stage(ws: Workspace) -> dict:
    """Fisher information of the grown checkpoint on the original directions' dev data."""
    m = ws.manifest

    def body() -> List[Path]:
        ckpt = checkpoint_store.load(ws.checkpoint("grown"))
        batches = []
        for d in load_directions(ws, m.old_languages, "dev"):
            batches.extend(batches_of(ckpt.vocab, d, FISHER_BATCH_PAIRS))
        fisher_map = fisher(ckpt, batches)
        summary = {
            name: {"mean": float(f.mean()), "max": float(f.max())} for name, f in fisher_map.items()
        }
        return [
            save_fisher(fisher_map, ws.path("checkpoints", "fisher.npz")),
            write_json(ws.report("fisher.json"), summary),
        ]

    return _run_stage(ws, "fisher", ["grow", "gen-data"], body)


def grow_model(
    m: ExperimentManifest,
    seed_ckpt: Checkpoint,
    full_vocab: Vocab,
    plan_name: Optional[str] = None,
) -> Tuple[Checkpoint, SurgeryReport]:
    """Surgery (or a fresh init, for growth_source=fresh) under one of the manifest's plans."""
    plan = m.plans[plan_name or m.plan].model_copy(update={"target_vocab": full_vocab})
    if m.growth_source == GrowthSource.FRESH:
        return fresh_growth(seed_ckpt, plan, stable_seed(m.seed, "fresh-init"))
    return grow(seed_ckpt, plan)


def continual_config(m: ExperimentManifest) -> TrainConfig:
    return m.continual.model_copy(update={"alpha": effective_alpha(m)})


def continual_phase(
    ws: Workspace,
    m: ExperimentManifest,
    grown: Checkpoint,
    report: SurgeryReport,
    groups: Optional[List[ParamGroup]] = None,
    snapshot_dir: Optional[Path] = None,
) -> TrainingResult:
    """
    Continual training of `grown` on every language of `m`, reading the
    corpora of `ws`. Without explicit groups, old and new elements get the
    manifest's γ_old and γ_new schedules.
    """
    config = continual_config(m)
    if groups is None:
        groups = split_groups(
            grown.params,
            {name: report.new_mask(name) for name in grown.params},
            config.gamma_old.as_tuple(config.total_steps),
            config.gamma_new.as_tuple(config.total_steps),
        )
    codes = m.old_languages + m.new_languages
    return train(
        grown,
        load_directions(ws, codes, "train"),
        config,
        groups=groups,
        val_directions=load_directions(ws, codes, "dev"),
        languages=codes,
        snapshot_dir=snapshot_dir,
    )


def train_continual(ws: Workspace) -> dict:
    m = ws.manifest
    config = continual_config(m)
    requires = ["grow", "gen-data"] + (["fisher"] if config.fisher_threshold is not None else [])

    def body() -> List[Path]:
        ckpt = checkpoint_store.load(ws.checkpoint("grown"))
        report = SurgeryReport.model_validate(read_json(ws.report("surgery.json")))
        groups = None
        if config.fisher_threshold is not None:
            fisher_map = load_fisher(ws.path("checkpoints", "fisher.npz"))
            groups = fisher_groups(fisher_map, config.fisher_threshold, config.fisher_gamma)
        result = continual_phase(ws, m, ckpt, report, groups, _snapshot_dir(ws, "continual", config))
        return _save_training(ws, "continual", result)

    return _run_stage(ws, "train-continual", requires, body)


def train_baseline(ws: Workspace) -> dict:
    """A from-scratch model at the baseline plan's architecture on all languages."""
    m = ws.manifest
    config = m.continual.model_copy(update={
        "alpha": effective_alpha(m),
        "total_steps": m.baseline_steps or m.continual.total_steps,
        "reset_scheduler": True,
    })

    def body() -> List[Path]:
        vocab = read_vocab(ws.vocab_file("full"))
        model = plan_config(m.model, m.plans[m.baseline_plan], vocab.size)
        ckpt = from_params(model, vocab, init_model(model, stable_seed(m.seed, "baseline-init")))
        codes = m.old_languages + m.new_languages
        result = train(
            ckpt,
            load_directions(ws, codes, "train"),
            config,
            val_directions=load_directions(ws, codes, "dev"),
            languages=codes,
            snapshot_dir=_snapshot_dir(ws, "baseline", config),
        )
        return _save_training(ws, "baseline", result)

    return _run_stage(ws, "train-baseline", ["gen-data"], body)


def evaluation_sets(ws: Workspace, ckpt: Checkpoint) -> List[Tuple[DirectionSpec, str]]:
    m = ws.manifest
    sets = [(d, ORIG) for d in load_directions(ws, m.old_languages, "test")]
    new = [code for code in m.new_languages if ckpt.vocab.lookup(tag_token(code)) is not None]
    sets += [(d, ADDED) for d in load_directions(ws, new, "test")]
    return sets


def _curve(ws: Workspace, name: str, test_sets, start_step: int) -> List[CurvePoint]:
    folder = ws.path("checkpoints", f"{name}_snapshots")
    points = []
    if not folder.exists():
        return points
    for path in sorted(folder.glob("step_*.ckpt")):
        snap = checkpoint_store.load(path)
        ev = ws.manifest.evaluation
        report = evaluate(snap, test_sets, ev.beam, ev.limit, length_penalty=ev.length_penalty)
        points.append(CurvePoint(updates=snap.step - start_step, bleu=report.aggregates["all"].bleu))
    return points


def evaluate_stage(ws: Workspace, name: str = "continual", curve: bool = False) -> dict:
    """Score checkpoint `name` on the test sets; optionally the BLEU-vs-updates curve of its snapshots."""
    if name not in CHECKPOINT_STAGES:
        raise ConfigError(f"unknown checkpoint '{name}'; expected one of {sorted(CHECKPOINT_STAGES)}")
    ev = ws.manifest.evaluation

    def body() -> List[Path]:
        ckpt = checkpoint_store.load(ws.checkpoint(name))
        test_sets = evaluation_sets(ws, ckpt)
        report = evaluate(ckpt, test_sets, ev.beam, ev.limit, length_penalty=ev.length_penalty)
        outputs = [
            write_json(ws.report(f"eval_{name}.json"), report.model_dump(mode="json")),
            write_text(ws.report(f"eval_{name}.csv"), report_to_csv(report)),
        ]
        if curve:
            start = 0
            if name == "continual" and not ws.manifest.continual.reset_scheduler:
                start = checkpoint_store.load(ws.checkpoint("grown")).step
            points = _curve(ws, name, test_sets, start)
            points.append(CurvePoint(updates=_phase_updates(ws, name), bleu=report.aggregates["all"].bleu))
            points = sorted({p.updates: p for p in points}.values(), key=lambda p: p.updates)
            outputs.append(write_json(ws.report(f"curve_{name}.json"), [p.model_dump() for p in points]))
        return outputs

    requires = [CHECKPOINT_STAGES[name], "gen-data"]
    return _run_stage(ws, f"evaluate-{name}", requires, body)


def _phase_updates(ws: Workspace, name: str) -> int:
    m = ws.manifest
    if name == "baseline":
        return m.baseline_steps or m.continual.total_steps
    if name == "continual":
        return m.continual.total_steps
    if name == "seed":
        return m.seed_training.total_steps
    return 0


def probe_forget(ws: Workspace) -> dict:
    m = ws.manifest

    def body() -> List[Path]:
        seed_ckpt = checkpoint_store.load(ws.checkpoint("seed"))
        trained = checkpoint_store.load(ws.checkpoint("continual"))
        report = forgetting_probe(
            seed_ckpt, trained, load_directions(ws, m.old_languages, "test"),
            m.evaluation.beam, m.evaluation.limit,
        )
        return [write_json(ws.report("forgetting.json"), report.model_dump(mode="json"))]

    return _run_stage(ws, "probe-forget", ["train-seed", "train-continual", "gen-data"], body)


def analyze_norms(ws: Workspace, name: str = "continual") -> dict:
    """Norm drift of the widened FFN matrices of checkpoint `name` (grown or continual)."""
    if name not in ("grown", "continual"):
        raise ConfigError(f"norm drift is measured on 'grown' or 'continual', not '{name}'")

    def body() -> List[Path]:
        seed_ckpt = checkpoint_store.load(ws.checkpoint("seed"))
        ckpt = checkpoint_store.load(ws.checkpoint(name))
        surgery = SurgeryReport.model_validate(read_json(ws.report("surgery.json")))
        report = norm_drift(seed_ckpt, ckpt, surgery)
        return [
            write_json(ws.report(f"norm_drift_{name}.json"), report.model_dump(mode="json")),
            write_text(ws.report(f"norm_drift_{name}.csv"), drift_to_csv(report)),
        ]

    requires = ["train-seed", "grow"] + (["train-continual"] if name == "continual" else [])
    return _run_stage(ws, f"analyze-norms-{name}", requires, body)


def report_stage(
    ws: Workspace,
    baseline_path: Optional[Path] = None,
    candidate_path: Optional[Path] = None,
) -> dict:
    """
    Compare two evaluation reports (default: baseline vs continual) and,
    when both BLEU curves exist, the compute saving of the grown run.
    """
    m = ws.manifest
    defaults = baseline_path is None and candidate_path is None
    baseline_path = Path(baseline_path or ws.report("eval_baseline.json"))
    candidate_path = Path(candidate_path or ws.report("eval_continual.json"))
    for path in (baseline_path, candidate_path):
        if not path.exists():
            raise StageDependencyError(f"evaluation report {path} is missing")
        if not defaults:
            require_artifact_stamp(path, ws.manifest_hash)

    def body() -> List[Path]:
        baseline = EvalReport.model_validate(read_json(baseline_path))
        candidate = EvalReport.model_validate(read_json(candidate_path))
        comparison: ComparisonReport = compare(baseline, candidate)
        outputs = [write_json(ws.report("comparison.json"), comparison.model_dump(mode="json"))]
        base_curve, grown_curve = ws.report("curve_baseline.json"), ws.report("curve_continual.json")
        if base_curve.exists() and grown_curve.exists():
            savings = compute_savings(
                [CurvePoint(**p) for p in read_json(base_curve)],
                [CurvePoint(**p) for p in read_json(grown_curve)],
                m.evaluation.savings_fraction,
            )
            outputs.append(write_json(ws.report("savings.json"), savings.model_dump(mode="json")))
        return outputs

    requires = ["evaluate-baseline", "evaluate-continual"] if defaults else []
    extra = {
        "baseline": hash_file(baseline_path),
        "candidate": hash_file(candidate_path),
    }
    return _run_stage(ws, "report", requires, body, extra=extra)


def write_manifest(path: Path, manifest: ExperimentManifest) -> Path:
    return write_text(path, canonical_json(manifest.model_dump(mode="json")))
