"""
Evaluation Service — decode held-out directions, score, aggregate and compare.

Directions are decoded in parallel (settings.EVAL_WORKERS threads) over a
read-only parameter map; results are merged in sorted direction order so
reports do not depend on scheduling.
"""

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.exceptions import ConfigError
from app.models.checkpoint import Checkpoint
from app.schemas.data import PIVOT, DirectionSpec
from app.schemas.report import (
    ADDED,
    ORIG,
    Aggregate,
    AggregateDelta,
    ComparisonReport,
    CurvePoint,
    DirectionDelta,
    DirectionScore,
    EvalReport,
    SavingsReport,
)
from app.services import checkpoint_store
from app.services.beam_search import decode_beam
from app.services.hash_service import hash_bytes
from app.services.metrics_service import bleu, chrfpp
from app.services.tokenizer_service import decode, encode

logger = logging.getLogger(__name__)

TIERS = ("high", "mid", "low", "v_low")


def checkpoint_id(ckpt: Checkpoint) -> str:
    return hash_bytes(checkpoint_store.serialize(ckpt))[:16]


def translate(
    ckpt: Checkpoint,
    direction: DirectionSpec,
    beam: int = 4,
    length_penalty: float = 1.0,
    limit: Optional[int] = None,
) -> List[str]:
    """Beam-decoded hypotheses for the source side of `direction`."""
    tag = ckpt.vocab.tag_id(direction.target)
    pairs = direction.pairs if limit is None else direction.pairs[:limit]
    out = []
    for source, _ in pairs:
        src_ids = encode(ckpt.vocab, direction.source, source)
        max_len = min(ckpt.config.max_positions - 2, 2 * len(source.split()) + 4)
        ids = decode_beam(ckpt.params, ckpt.config, src_ids, tag, beam, max_len, length_penalty)
        out.append(decode(ckpt.vocab, ids))
    return out


def score_direction(
    ckpt: Checkpoint,
    direction: DirectionSpec,
    group: str,
    beam: int = 4,
    limit: Optional[int] = None,
    length_penalty: float = 1.0,
) -> DirectionScore:
    hyps = translate(ckpt, direction, beam, length_penalty, limit)
    pairs = direction.pairs if limit is None else direction.pairs[:limit]
    refs = [t for _, t in pairs]
    score = DirectionScore(
        direction=direction.name,
        source=direction.source,
        target=direction.target,
        tier=direction.tier.value,
        group=group,
        bleu=bleu(hyps, refs),
        chrfpp=chrfpp(hyps, refs),
        segments=len(refs),
    )
    logger.info("%s [%s/%s] BLEU %.2f chrF++ %.2f", score.direction, group, score.tier, score.bleu, score.chrfpp)
    return score


def _mean(scores: Sequence[DirectionScore]) -> Optional[Aggregate]:
    if not scores:
        return None
    return Aggregate(
        bleu=float(np.mean([s.bleu for s in scores])),
        chrfpp=float(np.mean([s.chrfpp for s in scores])),
        directions=len(scores),
    )


def aggregate(scores: Sequence[DirectionScore]) -> Dict[str, Aggregate]:
    """Unweighted means over member directions; empty groups are omitted."""
    buckets = {
        "all": list(scores),
        ORIG: [s for s in scores if s.group == ORIG],
        ADDED: [s for s in scores if s.group == ADDED],
        "eng-x": [s for s in scores if s.source == PIVOT],
        "x-eng": [s for s in scores if s.target == PIVOT],
    }
    for tier in TIERS:
        buckets[f"tier:{tier}"] = [s for s in scores if s.tier == tier]
    out = {}
    for key, members in buckets.items():
        agg = _mean(members)
        if agg is not None:
            out[key] = agg
    return out


def evaluate(
    ckpt: Checkpoint,
    test_sets: Sequence[Tuple[DirectionSpec, str]],
    beam: int = 4,
    limit: Optional[int] = None,
    workers: Optional[int] = None,
    length_penalty: float = 1.0,
) -> EvalReport:
    """Score every (direction, orig|added) test set."""
    for direction, _ in test_sets:
        ckpt.vocab.tag_id(direction.source)
        ckpt.vocab.tag_id(direction.target)
    workers = workers or settings.EVAL_WORKERS
    ordered = sorted(test_sets, key=lambda item: item[0].name)

    def score(item: Tuple[DirectionSpec, str]) -> DirectionScore:
        return score_direction(ckpt, item[0], item[1], beam, limit, length_penalty)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(score, ordered))
    else:
        scores = [score(item) for item in ordered]
    return EvalReport(
        checkpoint_id=checkpoint_id(ckpt),
        step=ckpt.step,
        directions=scores,
        aggregates=aggregate(scores),
    )


def report_to_csv(report: EvalReport) -> str:
    """Flattened rows: one per direction, then one per aggregate."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "name", "group", "tier", "bleu", "chrfpp", "count"])
    for d in report.directions:
        writer.writerow(["direction", d.direction, d.group, d.tier, repr(d.bleu), repr(d.chrfpp), d.segments])
    for key, agg in report.aggregates.items():
        writer.writerow(["aggregate", key, "", "", repr(agg.bleu), repr(agg.chrfpp), agg.directions])
    return buf.getvalue()


# ------- Comparison -------

def _delta(base: Optional[float], cand: Optional[float]) -> AggregateDelta:
    delta = cand - base if base is not None and cand is not None else None
    return AggregateDelta(baseline=base, candidate=cand, delta=delta)


def compare(baseline: EvalReport, candidate: EvalReport) -> ComparisonReport:
    """All/Orig./Added table plus per-direction BLEU deltas with a paired standard error."""
    keys = sorted(set(baseline.aggregates) | set(candidate.aggregates))
    bleu_table, chrf_table = {}, {}
    for key in keys:
        b, c = baseline.aggregates.get(key), candidate.aggregates.get(key)
        bleu_table[key] = _delta(b.bleu if b else None, c.bleu if c else None)
        chrf_table[key] = _delta(b.chrfpp if b else None, c.chrfpp if c else None)

    base_by_name = {d.direction: d for d in baseline.directions}
    rows = []
    for d in candidate.directions:
        if d.direction in base_by_name:
            b = base_by_name[d.direction]
            rows.append(DirectionDelta(
                direction=d.direction, group=d.group,
                baseline_bleu=b.bleu, candidate_bleu=d.bleu, delta=d.bleu - b.bleu,
            ))
    deltas = np.array([r.delta for r in rows])
    mean = float(deltas.mean()) if deltas.size else 0.0
    se = float(deltas.std(ddof=1) / math.sqrt(deltas.size)) if deltas.size > 1 else 0.0
    return ComparisonReport(bleu=bleu_table, chrfpp=chrf_table, directions=rows,
                            mean_delta=mean, delta_standard_error=se)


def compute_savings(
    baseline_curve: Sequence[CurvePoint],
    grown_curve: Sequence[CurvePoint],
    fraction: float = 0.95,
) -> SavingsReport:
    """
    First update count at which the grown run reaches `fraction` of the
    baseline's final All-direction BLEU, and its ratio to the baseline budget.
    """
    if not baseline_curve:
        raise ConfigError("compute savings: the baseline BLEU curve has no points")
    base = sorted(baseline_curve, key=lambda p: p.updates)
    grown = sorted(grown_curve, key=lambda p: p.updates)
    final = base[-1]
    target = fraction * final.bleu
    reached = next((p.updates for p in grown if p.bleu >= target), None)
    ratio = reached / final.updates if reached is not None and final.updates else None
    return SavingsReport(
        fraction=fraction,
        baseline_final_bleu=final.bleu,
        target_bleu=target,
        baseline_updates=final.updates,
        grown_updates=reached,
        budget_ratio=ratio,
    )
