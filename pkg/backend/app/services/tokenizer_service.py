"""
Tokenizer Service — vocabulary construction, encoding and overlap mapping.

Vocabularies are built from whitespace tokens with temperature-weighted
per-language counts: each language's token counts are rescaled so that its
total mass becomes (raw mass)^(1/T). The top tokens by rescaled count are
kept, ties broken by lexicographic token order.
"""

import logging
from collections import Counter
from typing import Dict, Iterable, List, Sequence, Tuple

from app.exceptions import VocabError
from app.models.vocab import (
    EOS_ID,
    RESERVED,
    UNK,
    UNK_ID,
    Vocab,
    VocabMapping,
    tag_language,
    tag_token,
)

logger = logging.getLogger(__name__)


def count_tokens(texts: Iterable[str]) -> Counter:
    """Whitespace token counts over a stream of sentences."""
    counts: Counter = Counter()
    for text in texts:
        counts.update(text.split())
    return counts


def rescaled_counts(
    corpora: Sequence[Tuple[str, Dict[str, int]]],
    temperature: float,
) -> Tuple[Dict[str, float], Dict[str, float]]:
    """
    Merge per-language counts after temperature rescaling.

    Returns (token → rescaled count, language → rescaled mass).
    """
    merged: Dict[str, float] = {}
    masses: Dict[str, float] = {}
    for language, counts in corpora:
        raw_mass = float(sum(counts.values()))
        if raw_mass <= 0:
            masses[language] = masses.get(language, 0.0)
            continue
        target_mass = raw_mass ** (1.0 / temperature)
        factor = target_mass / raw_mass
        masses[language] = masses.get(language, 0.0) + target_mass
        for token, count in counts.items():
            merged[token] = merged.get(token, 0.0) + count * factor
    return merged, masses


def build_vocab(
    corpora: Sequence[Tuple[str, Dict[str, int]]],
    size: int,
    temperature: float = 2.0,
) -> Vocab:
    """
    Build a Vocab from (language, token-count map) corpora.

    Layout: reserved tokens, then tags sorted by language code, then the
    kept tokens ordered by descending rescaled count, ties by token string.
    """
    if not corpora:
        raise VocabError("cannot build a vocabulary from empty corpora")
    if temperature < 1:
        raise VocabError(f"temperature must be >= 1, got {temperature}")

    languages = sorted({language for language, _ in corpora})
    tags = [tag_token(language) for language in languages]
    budget = size - len(RESERVED) - len(tags)
    if budget <= 0:
        raise VocabError(
            f"vocabulary size {size} cannot hold {len(RESERVED)} reserved and {len(tags)} tag tokens"
        )

    merged, _ = rescaled_counts(corpora, temperature)
    reserved = set(RESERVED) | set(tags)
    candidates = [
        (token, count) for token, count in merged.items()
        if token not in reserved and tag_language(token) is None
    ]
    candidates.sort(key=lambda tc: (-tc[1], tc[0]))
    kept = [token for token, _ in candidates[:budget]]

    vocab = Vocab(list(RESERVED) + tags + kept)
    logger.info(
        "Built vocabulary: %d tokens (%d languages, %d candidates, T=%s)",
        vocab.size, len(languages), len(candidates), temperature,
    )
    return vocab


def encode(vocab: Vocab, language: str, text: str) -> List[int]:
    """[<lang:xxx>, tokens..., <eos>] with unknown tokens mapped to <unk>."""
    return [vocab.tag_id(language)] + encode_tokens(vocab, text) + [EOS_ID]


def encode_tokens(vocab: Vocab, text: str) -> List[int]:
    return [vocab.id_of(token) for token in text.split()]


def decode(vocab: Vocab, ids: Iterable[int]) -> str:
    """
    Render ids back to text. Padding, <bos>, <eos> and language tags are
    dropped; <unk> is rendered literally.
    """
    out = []
    for token_id in ids:
        token = vocab.token_of(int(token_id))
        if vocab.is_special(int(token_id)):
            continue
        out.append(UNK if token_id == UNK_ID else token)
    return " ".join(out)


def overlap_map(old: Vocab, new: Vocab) -> VocabMapping:
    """Pairs exactly the tokens whose surface strings occur in both vocabularies."""
    pairs = []
    for old_id, token in enumerate(old.tokens):
        new_id = new.lookup(token)
        if new_id is not None:
            pairs.append((old_id, new_id))
    mapping = VocabMapping(pairs, old.size, new.size)
    logger.info(
        "Vocabulary overlap: %d/%d new tokens mapped (coverage %.3f)",
        len(mapping), new.size, mapping.coverage,
    )
    return mapping
