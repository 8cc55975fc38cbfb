"""
Probe Service — forgetting and weight-drift diagnostics over grown checkpoints.

- substitute_embeddings: put the continually trained embedding rows of
  overlapping tokens back into the seed model
- forgetting_probe: seed vs substituted scores on the original directions
- norm_drift: Frobenius distances between the seed FFN matrix M, the old
  block M1 and the new block M2 of every widened projection
"""

import logging
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import DimensionError, SurgeryError
from app.models.checkpoint import Checkpoint
from app.models.tensor import Tensor
from app.models.transformer import EMBEDDING, OUTPUT_PROJECTION, parse_layer_name
from app.models.vocab import VocabMapping
from app.schemas.data import DirectionSpec
from app.schemas.growth import SurgeryReport, WidthInit
from app.schemas.report import ORIG, ForgettingReport, ForgettingRow, NormDriftReport, NormDriftRow
from app.services.evaluation_service import evaluate
from app.services.tokenizer_service import overlap_map

logger = logging.getLogger(__name__)

DRIFT_MATRICES = ("ffn.w1", "ffn.w2")


# ------- Embedding substitution -------

def substitute_embeddings(seed_ckpt: Checkpoint, grown_ckpt: Checkpoint, mapping: VocabMapping) -> Checkpoint:
    """Copy of the seed checkpoint whose mapped embedding rows come from the grown model."""
    if seed_ckpt.config.model_dim != grown_ckpt.config.model_dim:
        raise DimensionError(
            "substitute_embeddings",
            seed_ckpt.params[EMBEDDING].shape,
            grown_ckpt.params[EMBEDDING].shape,
        )
    if mapping.old_size != seed_ckpt.vocab.size or mapping.new_size != grown_ckpt.vocab.size:
        raise SurgeryError(
            f"mapping sizes ({mapping.old_size}, {mapping.new_size}) do not match "
            f"vocabularies ({seed_ckpt.vocab.size}, {grown_ckpt.vocab.size})"
        )

    out = seed_ckpt.copy()
    if not len(mapping):
        return out
    old_ids = np.array([o for o, _ in mapping.pairs], dtype=np.int64)
    new_ids = np.array([n for _, n in mapping.pairs], dtype=np.int64)
    names = [EMBEDDING] if seed_ckpt.config.tie_embeddings else [EMBEDDING, OUTPUT_PROJECTION]
    for name in names:
        table = seed_ckpt.array(name).copy()
        table[old_ids] = grown_ckpt.array(name)[new_ids]
        out.params[name] = Tensor(table, requires_grad=True)
    return out


def forgetting_probe(
    seed_ckpt: Checkpoint,
    grown_ckpt: Checkpoint,
    old_directions: Sequence[DirectionSpec],
    beam: int = 4,
    limit: Optional[int] = None,
    workers: Optional[int] = None,
) -> ForgettingReport:
    """
    Drop = seed score − substituted score on every original direction,
    averaged per resource tier.
    """
    mapping = overlap_map(seed_ckpt.vocab, grown_ckpt.vocab)
    substituted = substitute_embeddings(seed_ckpt, grown_ckpt, mapping)
    test_sets = [(d, ORIG) for d in old_directions]
    before = evaluate(seed_ckpt, test_sets, beam=beam, limit=limit, workers=workers)
    after = evaluate(substituted, test_sets, beam=beam, limit=limit, workers=workers)

    rows = []
    by_tier: Dict[str, List[float]] = defaultdict(list)
    for score in before.directions:
        sub = after.score(score.direction)
        drop = score.bleu - sub.bleu
        rows.append(ForgettingRow(
            direction=score.direction,
            tier=score.tier,
            seed_bleu=score.bleu,
            substituted_bleu=sub.bleu,
            drop=drop,
        ))
        by_tier[score.tier].append(drop)

    tier_drop = {tier: float(np.mean(drops)) for tier, drops in sorted(by_tier.items())}
    mean_drop = float(np.mean([r.drop for r in rows])) if rows else 0.0
    logger.info("Forgetting probe over %d directions: mean drop %.3f %s", len(rows), mean_drop, tier_drop)
    return ForgettingReport(rows=rows, tier_drop=tier_drop, mean_drop=mean_drop)


# ------- Norm drift -------

def frobenius_distances(m: np.ndarray, m1: np.ndarray, m2: np.ndarray) -> Tuple[float, float, float]:
    """(‖M1−M‖, ‖M2−M‖, ‖M1−M2‖) in the Frobenius norm."""
    if not (m.shape == m1.shape == m2.shape):
        raise DimensionError("frobenius_distances", m.shape, m1.shape if m1.shape != m.shape else m2.shape)
    return (
        float(np.linalg.norm(m1 - m)),
        float(np.linalg.norm(m2 - m)),
        float(np.linalg.norm(m1 - m2)),
    )


def _unit_sources(strategy: WidthInit, hidden: int, factor: int) -> np.ndarray:
    units = np.arange(hidden * factor)
    if strategy == WidthInit.LINEAR_INTERP:
        return units // factor
    return units % hidden


def _block_units(is_new: np.ndarray, sources: np.ndarray, hidden: int) -> Tuple[np.ndarray, np.ndarray]:
    """Old hidden units in seed order, and the first new unit derived from each."""
    old_units = np.nonzero(~is_new)[0]
    new_units = np.empty(hidden, dtype=np.int64)
    seen = np.zeros(hidden, dtype=bool)
    for u in np.nonzero(is_new)[0]:
        h = sources[u]
        if not seen[h]:
            new_units[h] = u
            seen[h] = True
    if old_units.size != hidden or not seen.all():
        raise SurgeryError("widened tensor does not hold one old and at least one new block")
    return old_units[np.argsort(sources[old_units], kind="stable")], new_units


def norm_drift(seed_ckpt: Checkpoint, grown_ckpt: Checkpoint, report: SurgeryReport) -> NormDriftReport:
    """
    Drift of every widened FFN projection of `grown_ckpt` from the seed
    matrix it was grown from. M includes the norm-matching scale applied
    at surgery, so M1 = M immediately after growth.
    """
    if "widen_ffn" not in report.stages_applied:
        raise SurgeryError("surgery report has no widening partition to measure drift against")

    hidden = int(report.seed_config["ffn_hidden_dim"])
    grown_hidden = int(report.grown_config["ffn_hidden_dim"])
    factor = grown_hidden // hidden
    sources = _unit_sources(WidthInit(report.plan.width_init), hidden, factor)

    rows = []
    for name in sorted(report.tensors):
        parsed = parse_layer_name(name)
        if parsed is None or parsed[2] not in DRIFT_MATRICES:
            continue
        prov = report.tensors[name]
        if prov.source is None:
            continue
        stack, layer, local = parsed
        axis = 0 if local == "ffn.w1" else 1
        mask = prov.new_mask()
        is_new = mask[:, 0] if axis == 0 else mask[0, :]
        old_units, new_units = _block_units(is_new, sources, hidden)

        grown = grown_ckpt.array(name)
        m = seed_ckpt.array(prov.source) * prov.scale
        m1 = np.take(grown, old_units, axis=axis)
        m2 = np.take(grown, new_units, axis=axis)
        d1, d2, d12 = frobenius_distances(m, m1, m2)
        rows.append(NormDriftRow(
            stack=stack, layer=layer, matrix=local.split(".")[-1],
            d_M1_M=d1, d_M2_M=d2, d_M1_M2=d12,
        ))

    result = NormDriftReport(rows=rows)
    logger.info(
        "Norm drift over %d matrices: mean ‖M1−M‖ %.4f, mean ‖M1−M2‖ %.4f",
        len(rows), result.mean("d_M1_M"), result.mean("d_M1_M2"),
    )
    return result


def drift_to_csv(report: NormDriftReport) -> str:
    lines = ["stack,layer,matrix,d_M1_M,d_M2_M,d_M1_M2"]
    for r in report.rows:
        lines.append(f"{r.stack},{r.layer},{r.matrix},{r.d_M1_M!r},{r.d_M2_M!r},{r.d_M1_M2!r}")
    return "\n".join(lines) + "\n"
