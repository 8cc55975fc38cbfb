"""
Shared fixtures: a tiny model configuration and vocabulary, synthetic
directions and an untrained checkpoint built from them.
"""

import numpy as np
import pytest

from app.models.checkpoint import from_params
from app.models.transformer import ModelConfig
from app.models.vocab import RESERVED, Vocab, tag_token
from app.schemas.data import LanguageSpec, ReorderKind, ReorderRule, Tier
from app.schemas.manifest import ExperimentManifest
from app.schemas.training import GammaSchedule, TrainConfig
from app.services.synth_data import gen_corpus, token_counts_by_language
from app.services.tokenizer_service import build_vocab
from app.services.transformer_service import init_model
from app.utils.helpers import write_json


def tiny_config(vocab_size: int, **overrides) -> ModelConfig:
    fields = dict(
        enc_layers=2, dec_layers=2, model_dim=16, ffn_hidden_dim=32, heads=2,
        vocab_size=vocab_size, attention_dropout=0.0, max_positions=32,
    )
    fields.update(overrides)
    return ModelConfig(**fields)


@pytest.fixture
def languages():
    return {
        "xxa": LanguageSpec(code="xxa", script="latn", cipher_seed="fam.xxa", tier=Tier.HIGH),
        "xxb": LanguageSpec(
            code="xxb", script="cyrl", cipher_seed="fam.xxb",
            reorder=ReorderRule(kind=ReorderKind.SWAP_ADJACENT), tier=Tier.LOW,
        ),
        "xxc": LanguageSpec(code="xxc", script="gujr", cipher_seed="other.xxc", tier=Tier.V_LOW),
    }


@pytest.fixture
def old_directions(languages):
    out = []
    for code, n in (("xxa", 40), ("xxb", 12)):
        out.extend(gen_corpus(languages[code], n, seed=7))
    return out


@pytest.fixture
def new_directions(languages):
    return list(gen_corpus(languages["xxc"], 10, seed=7))


@pytest.fixture
def seed_vocab(old_directions):
    counts = token_counts_by_language(old_directions)
    return build_vocab(sorted(counts.items()), size=400, temperature=2.0)


@pytest.fixture
def full_vocab(old_directions, new_directions):
    counts = token_counts_by_language(old_directions + new_directions)
    return build_vocab(sorted(counts.items()), size=400, temperature=2.0)


@pytest.fixture
def seed_ckpt(seed_vocab):
    config = tiny_config(seed_vocab.size)
    return from_params(config, seed_vocab, init_model(config, seed=3))


@pytest.fixture
def micro_vocab():
    """Eight tokens: the reserved four, two language tags and two words."""
    return Vocab(list(RESERVED) + [tag_token("eng"), tag_token("xxa"), "a", "b"])


@pytest.fixture
def micro_ckpt(micro_vocab):
    config = tiny_config(micro_vocab.size, model_dim=8, ffn_hidden_dim=16, max_positions=16)
    return from_params(config, micro_vocab, init_model(config, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def tiny_manifest_data(**overrides) -> dict:
    """A manifest small enough to run every stage in seconds."""
    manifest = ExperimentManifest(
        name="tiny",
        seed=77,
        output_dir="tiny",
        languages=[
            LanguageSpec(code="xxa", script="latn", cipher_seed="fam.xxa", tier=Tier.HIGH),
            LanguageSpec(
                code="xxb", script="cyrl", cipher_seed="fam.xxb",
                reorder=ReorderRule(kind=ReorderKind.SWAP_ADJACENT), tier=Tier.LOW,
            ),
            LanguageSpec(code="xxc", script="gujr", cipher_seed="other.xxc", tier=Tier.V_LOW),
            LanguageSpec(code="xxd", script="cyrl", cipher_seed="fam.xxd", tier=Tier.V_LOW),
        ],
        old_languages=["xxa", "xxb"],
        new_languages=["xxc", "xxd"],
        data={"tier_scale": 0.002, "dev_pairs": 4, "test_pairs": 4},
        vocab={"size": 400, "temperature": 2.0},
        model=ModelConfig(
            enc_layers=1, dec_layers=1, model_dim=8, ffn_hidden_dim=16, heads=2,
            vocab_size=400, attention_dropout=0.0, max_positions=32,
        ),
        seed_training=TrainConfig(
            peak_lr=0.003, warmup_steps=2, total_steps=3, batch_tokens=16, val_every=3, val_pairs=2, seed=1,
        ),
        continual=TrainConfig(
            peak_lr=0.003, warmup_steps=2, total_steps=3, batch_tokens=16, val_every=3, val_pairs=2, seed=2,
            alpha={"eng-xxc": 5.0, "xxc-eng": 5.0},
            gamma_old=GammaSchedule.constant(0.5),
            gamma_new=GammaSchedule.constant(1.0),
        ),
        baseline_steps=2,
        evaluation={"beam": 1, "limit": 2},
    )
    data = manifest.model_dump(mode="json")
    data.update(overrides)
    return data


@pytest.fixture
def manifest_file(tmp_path):
    """The tiny manifest written to disk."""
    return write_json(tmp_path / "manifest.json", tiny_manifest_data())
