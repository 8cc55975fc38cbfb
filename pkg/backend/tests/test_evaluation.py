"""
Test — Evaluation

Validates:
- Direction scoring and report determinism across worker counts
- Aggregates: All / Orig. / Added, tiers and English-side groups
- Baseline comparison deltas and compute-savings curves
"""

import math

import pytest

from app.exceptions import ConfigError, VocabError
from app.schemas.report import ADDED, ORIG, CurvePoint, DirectionScore, EvalReport
from app.services.evaluation_service import (
    aggregate,
    checkpoint_id,
    compare,
    compute_savings,
    evaluate,
    report_to_csv,
    translate,
)


def score(direction: str, group: str, tier: str, value: float) -> DirectionScore:
    source, target = direction.split("-")
    return DirectionScore(
        direction=direction, source=source, target=target, tier=tier,
        group=group, bleu=value, chrfpp=value / 2, segments=10,
    )


SCORES = [
    score("eng-xxa", ORIG, "high", 40.0),
    score("xxa-eng", ORIG, "high", 30.0),
    score("eng-xxb", ORIG, "low", 20.0),
    score("eng-xxc", ADDED, "v_low", 10.0),
    score("xxc-eng", ADDED, "v_low", 6.0),
]


class TestAggregate:
    """Unweighted group means."""

    def test_groups(self):
        agg = aggregate(SCORES)
        assert agg["all"].bleu == pytest.approx(21.2)
        assert agg[ORIG].bleu == pytest.approx(30.0)
        assert agg[ADDED].bleu == pytest.approx(8.0)
        assert agg["tier:high"].bleu == pytest.approx(35.0)
        assert agg["eng-x"].bleu == pytest.approx(70.0 / 3)
        assert agg["x-eng"].directions == 2
        assert agg[ORIG].chrfpp == pytest.approx(15.0)

    def test_empty_groups_omitted(self):
        agg = aggregate(SCORES[:2])
        assert ADDED not in agg
        assert "tier:low" not in agg
        assert set(agg) == {"all", ORIG, "eng-x", "x-eng", "tier:high"}


class TestEvaluate:
    """Decoding held-out sets."""

    def test_report(self, seed_ckpt, old_directions):
        test_sets = [(d, ORIG) for d in old_directions]
        report = evaluate(seed_ckpt, test_sets, beam=2, limit=2, workers=1)
        assert [d.direction for d in report.directions] == sorted(d.name for d in old_directions)
        assert all(d.segments == 2 for d in report.directions)
        assert report.checkpoint_id == checkpoint_id(seed_ckpt)
        assert len(report.checkpoint_id) == 16
        assert report.step == seed_ckpt.step
        assert report.aggregates["all"].directions == 4

    def test_workers_do_not_change_report(self, seed_ckpt, old_directions):
        test_sets = [(d, ORIG) for d in old_directions]
        serial = evaluate(seed_ckpt, test_sets, beam=2, limit=2, workers=1)
        threaded = evaluate(seed_ckpt, test_sets, beam=2, limit=2, workers=3)
        assert serial.model_dump() == threaded.model_dump()
        assert report_to_csv(serial) == report_to_csv(threaded)

    def test_translation_length_bounded(self, seed_ckpt, old_directions):
        direction = old_directions[0]
        for (source, _), hyp in zip(direction.pairs[:3], translate(seed_ckpt, direction, beam=2, limit=3)):
            assert len(hyp.split()) <= 2 * len(source.split()) + 4

    def test_unknown_language(self, seed_ckpt, new_directions):
        with pytest.raises(VocabError):
            evaluate(seed_ckpt, [(new_directions[0], ADDED)], beam=1, limit=1)

    def test_csv_rows(self, seed_ckpt, old_directions):
        report = evaluate(seed_ckpt, [(old_directions[0], ORIG)], beam=1, limit=1)
        lines = report_to_csv(report).splitlines()
        assert lines[0] == "kind,name,group,tier,bleu,chrfpp,count"
        assert lines[1].startswith("direction,eng-xxa,orig,high,")
        assert any(line.startswith("aggregate,all,") for line in lines)


class TestCompare:
    """Baseline vs candidate."""

    def test_deltas(self):
        base = EvalReport(checkpoint_id="b", step=10, directions=SCORES, aggregates=aggregate(SCORES))
        bumped = [s.model_copy(update={"bleu": s.bleu + d}) for s, d in zip(SCORES, [1, 2, 3, 4, 5])]
        cand = EvalReport(checkpoint_id="c", step=20, directions=bumped, aggregates=aggregate(bumped))
        result = compare(base, cand)
        assert result.bleu["all"].delta == pytest.approx(3.0)
        assert result.bleu[ADDED].delta == pytest.approx(4.5)
        assert [r.delta for r in result.directions] == pytest.approx([1, 2, 3, 4, 5])
        assert result.mean_delta == pytest.approx(3.0)
        assert result.delta_standard_error == pytest.approx(math.sqrt(2.5 / 5))

    def test_missing_group_has_no_delta(self):
        base = EvalReport(checkpoint_id="b", step=1, directions=SCORES[:3], aggregates=aggregate(SCORES[:3]))
        cand = EvalReport(checkpoint_id="c", step=1, directions=SCORES, aggregates=aggregate(SCORES))
        result = compare(base, cand)
        assert result.bleu[ADDED].baseline is None
        assert result.bleu[ADDED].delta is None
        assert len(result.directions) == 3


class TestSavings:
    """Update budget to reach a fraction of the baseline."""

    def test_reached(self):
        baseline = [CurvePoint(updates=u, bleu=b) for u, b in [(100, 10.0), (200, 18.0), (400, 20.0)]]
        grown = [CurvePoint(updates=u, bleu=b) for u, b in [(50, 12.0), (100, 19.0), (150, 19.5)]]
        result = compute_savings(baseline, grown)
        assert result.target_bleu == pytest.approx(19.0)
        assert result.grown_updates == 100
        assert result.budget_ratio == pytest.approx(0.25)

    def test_not_reached(self):
        baseline = [CurvePoint(updates=100, bleu=20.0)]
        grown = [CurvePoint(updates=100, bleu=5.0)]
        result = compute_savings(baseline, grown)
        assert result.grown_updates is None
        assert result.budget_ratio is None

    def test_empty_baseline_curve(self):
        grown = [CurvePoint(updates=100, bleu=5.0)]
        with pytest.raises(ConfigError, match="no points"):
            compute_savings([], grown)
