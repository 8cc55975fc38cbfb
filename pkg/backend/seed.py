"""
MTGrow — Default Manifest Seed Script

Writes the shipped desk-scale experiment manifests:
- default: 8 old languages (2 high, 2 mid, 3 low, 1 very-low) and 3 new
  low-resource ones, two of them in scripts no old language uses and one
  closely related to an old low-resource language
- few-seed: the same 11 languages with only the 4 high/mid ones in the
  seed model

Usage:
    python seed.py                          # writes manifest.json
    python seed.py --variant few-seed --out few_seed.json
"""

import argparse
import logging
from pathlib import Path

from app.models.transformer import ModelConfig
from app.schemas.data import LanguageSpec, ReorderKind, ReorderRule, Tier
from app.schemas.manifest import DataSettings, EvalSettings, ExperimentManifest, VocabSettings
from app.schemas.training import GammaSchedule, TrainConfig
from app.services.pipeline_service import write_manifest

logger = logging.getLogger(__name__)

SWAP = ReorderRule(kind=ReorderKind.SWAP_ADJACENT)
REVERSE = ReorderRule(kind=ReorderKind.REVERSE_WINDOW, window=3)

LANGUAGES = [
    # ===== OLD =====
    LanguageSpec(code="deu", script="latn", cipher_seed="germanic.deu", tier=Tier.HIGH),
    LanguageSpec(code="rus", script="cyrl", cipher_seed="slavic.rus", reorder=SWAP, tier=Tier.HIGH),
    LanguageSpec(code="hin", script="deva", cipher_seed="indic.hin", reorder=REVERSE, tier=Tier.MID),
    LanguageSpec(code="ara", script="arab", cipher_seed="semitic.ara", reorder=SWAP, tier=Tier.MID),
    LanguageSpec(code="swe", script="latn", cipher_seed="germanic.swe", tier=Tier.LOW),
    LanguageSpec(code="ukr", script="cyrl", cipher_seed="slavic.ukr", reorder=SWAP, tier=Tier.LOW),
    LanguageSpec(code="mar", script="deva", cipher_seed="indic.mar", reorder=REVERSE, tier=Tier.LOW),
    LanguageSpec(code="tgl", script="latn", cipher_seed="austronesian.tgl", tier=Tier.V_LOW),
    # ===== NEW =====
    LanguageSpec(code="guj", script="gujr", cipher_seed="indic.guj", reorder=REVERSE, tier=Tier.LOW),
    LanguageSpec(code="tir", script="ethi", cipher_seed="semitic.tir", reorder=SWAP, tier=Tier.V_LOW),
    LanguageSpec(code="bel", script="cyrl", cipher_seed="slavic.bel", reorder=SWAP, tier=Tier.V_LOW),
]

OLD = ["ara", "deu", "hin", "mar", "rus", "swe", "tgl", "ukr"]
NEW = ["bel", "guj", "tir"]
FEW_SEED_OLD = ["ara", "deu", "hin", "rus"]

NEW_LANGUAGE_ALPHA = 5.0


def _alpha(codes) -> dict:
    alpha = {}
    for code in codes:
        alpha[f"eng-{code}"] = NEW_LANGUAGE_ALPHA
        alpha[f"{code}-eng"] = NEW_LANGUAGE_ALPHA
    return alpha


def default_manifest() -> ExperimentManifest:
    return ExperimentManifest(
        name="default",
        seed=1234,
        output_dir="default",
        languages=LANGUAGES,
        old_languages=OLD,
        new_languages=NEW,
        data=DataSettings(tier_scale=0.1, dev_pairs=20, test_pairs=40),
        vocab=VocabSettings(size=512, temperature=2.0),
        model=ModelConfig(
            enc_layers=2, dec_layers=2, model_dim=32, ffn_hidden_dim=64, heads=4,
            vocab_size=512, max_positions=32,
        ),
        seed_training=TrainConfig(
            peak_lr=0.003, warmup_steps=100, total_steps=600, batch_tokens=256,
            temperature=2.0, val_every=100, seed=1,
        ),
        plan="wide",
        continual=TrainConfig(
            peak_lr=0.003, warmup_steps=100, total_steps=300, batch_tokens=256,
            temperature=2.0, val_every=50, snapshot_every=50, seed=2,
            alpha=_alpha(NEW),
            gamma_old=GammaSchedule.constant(0.5),
            gamma_new=GammaSchedule.constant(1.0),
        ),
        baseline_plan="wide",
        baseline_steps=600,
        evaluation=EvalSettings(beam=4, limit=20),
    )


def few_seed_manifest() -> ExperimentManifest:
    base = default_manifest()
    new = sorted(set(OLD + NEW) - set(FEW_SEED_OLD))
    data = base.model_dump(mode="json")
    data.update(name="few-seed", output_dir="few-seed", old_languages=FEW_SEED_OLD, new_languages=new)
    data["continual"]["alpha"] = _alpha(new)
    return ExperimentManifest.model_validate(data)


VARIANTS = {"default": default_manifest, "few-seed": few_seed_manifest}


def main() -> None:
    parser = argparse.ArgumentParser(description="Write a shipped experiment manifest.")
    parser.add_argument("--variant", choices=sorted(VARIANTS), default="default")
    parser.add_argument("--out", type=Path, default=Path("manifest.json"))
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    path = write_manifest(args.out, VARIANTS[args.variant]())
    logger.info("Wrote %s manifest to %s", args.variant, path)


if __name__ == "__main__":
    main()
