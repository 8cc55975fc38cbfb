"""
Synthetic Data Service — deterministic English-centric parallel corpora.

Generation model:
- A shared latent lexicon of LEXICON_SIZE ids, sampled with Zipf weights
  (p_j ∝ 1/(j+1)); latent sentences have 3..12 tokens.
- English renders latent ids through the identity lexicon.
- Every other language applies a bijective cipher (its family's base
  permutation plus a few language-specific swaps), then its reorder rule,
  then writes `<script>_tok_<id>` surfaces.
- Reorder rules are involutions, so the inverse transformation recovers
  the English side exactly.

Corpora are UTF-8, one tab-separated (source, target) pair per line.
"""

import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set, Tuple, Union

import numpy as np

from app.exceptions import ConfigError
from app.schemas.data import (
    IDENTITY_CIPHER,
    PIVOT,
    DirectionSpec,
    LanguageSpec,
    ReorderKind,
    ReorderRule,
    Tier,
)
from app.services.hash_service import hash_pair, stable_seed
from app.services.tokenizer_service import count_tokens

logger = logging.getLogger(__name__)

LEXICON_SIZE = 80
MIN_LENGTH, MAX_LENGTH = 3, 12
PIVOT_SCRIPT = "latn"
TIER_BASE = {Tier.HIGH: 20000, Tier.MID: 5000, Tier.LOW: 1000, Tier.V_LOW: 200}
MIN_TIER_SIZE = 10

Pair = Tuple[str, str]


def tier_size(tier: Tier, scale: float = 1.0) -> int:
    """Pairs per direction for a resource tier, floor-rounded, at least 10."""
    if scale <= 0:
        raise ConfigError(f"tier scale must be > 0, got {scale}")
    return max(MIN_TIER_SIZE, int(np.floor(TIER_BASE[Tier(tier)] * scale)))


# ------- Lexicon -------

def cipher(spec: LanguageSpec, seed: int, lexicon_size: int = LEXICON_SIZE) -> np.ndarray:
    """Permutation latent id -> surface id."""
    if spec.cipher_seed == IDENTITY_CIPHER:
        return np.arange(lexicon_size)
    base = np.random.default_rng(stable_seed(seed, "family", spec.family)).permutation(lexicon_size)
    rng = np.random.default_rng(stable_seed(seed, "cipher", spec.cipher_seed))
    for _ in range(max(1, lexicon_size // 10)):
        i, j = rng.integers(0, lexicon_size, size=2)
        base[i], base[j] = base[j], base[i]
    return base


def zipf_weights(lexicon_size: int = LEXICON_SIZE) -> np.ndarray:
    w = 1.0 / np.arange(1, lexicon_size + 1)
    return w / w.sum()


def reorder(tokens: Sequence, rule: ReorderRule) -> List:
    """Apply a reorder rule; every rule is its own inverse."""
    tokens = list(tokens)
    if rule.kind == ReorderKind.SWAP_ADJACENT:
        for i in range(0, len(tokens) - 1, 2):
            tokens[i], tokens[i + 1] = tokens[i + 1], tokens[i]
    elif rule.kind == ReorderKind.REVERSE_WINDOW:
        k = rule.window
        tokens = [t for i in range(0, len(tokens), k) for t in reversed(tokens[i:i + k])]
    return tokens


def surface(script: str, token_id: int) -> str:
    return f"{script}_tok_{int(token_id)}"


def render(spec: LanguageSpec, latent: Sequence[int], table: np.ndarray) -> str:
    ids = reorder([table[j] for j in latent], spec.reorder)
    return " ".join(surface(spec.script, j) for j in ids)


def render_english(latent: Sequence[int]) -> str:
    return " ".join(surface(PIVOT_SCRIPT, j) for j in latent)


# ------- Sentences -------

def latent_sentences(n: int, seed: int, label: str, lexicon_size: int = LEXICON_SIZE) -> List[List[int]]:
    rng = np.random.default_rng(stable_seed(seed, "sentences", label))
    weights = zipf_weights(lexicon_size)
    lengths = rng.integers(MIN_LENGTH, MAX_LENGTH + 1, size=n)
    return [rng.choice(lexicon_size, size=int(k), p=weights).tolist() for k in lengths]


def gen_corpus(
    spec: LanguageSpec,
    n_pairs: int,
    seed: int,
    split: str = "train",
    lexicon_size: int = LEXICON_SIZE,
) -> Tuple[DirectionSpec, DirectionSpec]:
    """(eng→X, X→eng) over the same latent sentences."""
    if n_pairs < 1:
        raise ConfigError(f"n_pairs must be >= 1, got {n_pairs}")
    table = cipher(spec, seed, lexicon_size)
    pairs = [
        (render_english(latent), render(spec, latent, table))
        for latent in latent_sentences(n_pairs, seed, f"{spec.code}/{split}", lexicon_size)
    ]
    forward = DirectionSpec(source=PIVOT, target=spec.code, tier=spec.tier, pairs=pairs)
    backward = DirectionSpec(source=spec.code, target=PIVOT, tier=spec.tier, pairs=[(x, e) for e, x in pairs])
    return forward, backward


def held_out_pairs(
    spec: LanguageSpec,
    n_pairs: int,
    seed: int,
    split: str,
    exclude: Set[str],
    lexicon_size: int = LEXICON_SIZE,
) -> List[Pair]:
    """
    eng→X pairs for an evaluation split, none of whose pair hashes is in
    `exclude`. Duplicates within the split are dropped too.
    """
    table = cipher(spec, seed, lexicon_size)
    out: List[Pair] = []
    seen = set(exclude)
    attempt = 0
    while len(out) < n_pairs and attempt < 20:
        for latent in latent_sentences(n_pairs * 2, seed, f"{spec.code}/{split}/{attempt}", lexicon_size):
            pair = (render_english(latent), render(spec, latent, table))
            key = hash_pair(*pair)
            if key in seen:
                continue
            seen.add(key)
            out.append(pair)
            if len(out) == n_pairs:
                break
        attempt += 1
    if len(out) < n_pairs:
        logger.warning("Only %d unique held-out pairs for %s/%s", len(out), spec.code, split)
    return out


def pair_hashes(pairs: Iterable[Pair]) -> Set[str]:
    return {hash_pair(s, t) for s, t in pairs}


def swap_sides(pairs: Iterable[Pair]) -> List[Pair]:
    return [(t, s) for s, t in pairs]


# ------- I/O -------

def write_corpus(path: Union[str, Path], pairs: Iterable[Pair]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for source, target in pairs:
            fh.write(f"{source}\t{target}\n")
    return path


def read_corpus(path: Union[str, Path]) -> List[Pair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            source, _, target = line.partition("\t")
            pairs.append((source, target))
    return pairs


def token_counts_by_language(directions: Sequence[DirectionSpec]) -> Dict[str, Counter]:
    """Whitespace token counts per language over both sides of each direction."""
    counts: Dict[str, Counter] = {}
    for d in directions:
        for lang, side in ((d.source, 0), (d.target, 1)):
            counts.setdefault(lang, Counter()).update(count_tokens(pair[side] for pair in d.pairs))
    return counts
