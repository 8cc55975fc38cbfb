"""
Sampler Service — temperature/up-sampling direction sampling and batch assembly.

Direction probabilities: p_d ∝ (α_d · n_d)^(1/T).
"""

import logging
from typing import List, Mapping, Sequence, Tuple

import numpy as np

from app.exceptions import ConfigError
from app.models.vocab import Vocab
from app.schemas.data import DirectionSpec
from app.services.transformer_service import Batch, build_example, collate

logger = logging.getLogger(__name__)


def sampling_probabilities(
    directions: Sequence[DirectionSpec],
    temperature: float = 1.0,
    alpha: Mapping[str, float] = None,
) -> np.ndarray:
    """
    Probability of each direction. `alpha` overrides the directions' own α
    by direction name.
    """
    if not directions:
        raise ConfigError("cannot sample from an empty direction set")
    if temperature < 1:
        raise ConfigError(f"sampling temperature must be >= 1, got {temperature}")
    alpha = alpha or {}
    mass = []
    for d in directions:
        if d.size <= 0:
            raise ConfigError(f"direction {d.name} has no pairs")
        a = alpha.get(d.name, d.alpha)
        if a < 1:
            raise ConfigError(f"α for {d.name} must be >= 1, got {a}")
        mass.append((a * d.size) ** (1.0 / temperature))
    mass = np.asarray(mass)
    return mass / mass.sum()


def sample_direction(probabilities: np.ndarray, rng: np.random.Generator) -> int:
    """Index of one direction drawn from `probabilities`."""
    cdf = np.cumsum(probabilities)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(cdf) - 1))


def draw_batch(
    vocab: Vocab,
    direction: DirectionSpec,
    batch_tokens: int,
    rng: np.random.Generator,
) -> Tuple[Batch, List[int]]:
    """
    Sentence pairs from one direction until the target-side token count
    reaches batch_tokens (at least one pair). Returns the batch and the
    pair indices used.
    """
    examples = []
    indices: List[int] = []
    tokens = 0
    while tokens < batch_tokens:
        i = int(rng.integers(0, direction.size))
        src, tgt = direction.pairs[i]
        example = build_example(vocab, direction.source, direction.target, src, tgt)
        examples.append(example)
        indices.append(i)
        tokens += len(example[2]) - 1
    return collate(examples), indices


def batches_of(vocab: Vocab, direction: DirectionSpec, pairs_per_batch: int, limit: int = None) -> List[Batch]:
    """Deterministic sequential batches over (the first `limit`) pairs."""
    pairs = direction.pairs if limit is None else direction.pairs[:limit]
    out = []
    for start in range(0, len(pairs), pairs_per_batch):
        chunk = pairs[start:start + pairs_per_batch]
        out.append(collate([build_example(vocab, direction.source, direction.target, s, t) for s, t in chunk]))
    return out
