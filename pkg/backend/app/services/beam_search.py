"""
Beam Search — deterministic decoding over next-token log-probabilities.

- The decoder prefix [<bos>, <lang:tgt>] is forced.
- Every live hypothesis is expanded over the full vocabulary; the `beam`
  best candidates by cumulative log-probability survive, ties broken by
  the lexicographically lower id sequence.
- A candidate ending in <eos> is finished. At max_len every remaining
  candidate is finished unpruned (truncation).
- The returned hypothesis maximizes logprob / length^length_penalty,
  where length counts generated tokens including <eos>.
"""

from typing import List, Sequence, Tuple

import numpy as np

from app.models.tensor import Tensor
from app.models.transformer import ModelConfig
from app.models.vocab import BOS_ID, EOS_ID
from app.services.transformer_service import ParamMap, encode_source, next_token_log_probs

Hypothesis = Tuple[float, Tuple[int, ...]]


def _final_score(logprob: float, length: int, length_penalty: float) -> float:
    return logprob / (max(length, 1) ** length_penalty)


def _best(finished: List[Hypothesis], length_penalty: float) -> Tuple[int, ...]:
    ranked = sorted(
        finished,
        key=lambda h: (-_final_score(h[0], len(h[1]), length_penalty), h[1]),
    )
    return ranked[0][1]


def decode_beam(
    params: ParamMap,
    config: ModelConfig,
    src_ids: Sequence[int],
    tgt_tag_id: int,
    beam: int = 4,
    max_len: int = 32,
    length_penalty: float = 1.0,
) -> List[int]:
    """Best output ids, excluding <bos>, the language tag and <eos>."""
    beam = max(1, int(beam))
    max_len = min(max_len, config.max_positions - 2)
    src = np.asarray([list(src_ids)], dtype=np.int64)
    memory = encode_source(params, config, src)

    live: List[Hypothesis] = [(0.0, ())]
    finished: List[Hypothesis] = []

    for step in range(1, max_len + 1):
        n = len(live)
        prefixes = np.array(
            [[BOS_ID, tgt_tag_id] + list(tokens) for _, tokens in live], dtype=np.int64
        )
        batch_memory = Tensor(np.repeat(memory.data, n, axis=0))
        logp = next_token_log_probs(params, config, batch_memory, np.repeat(src, n, axis=0), prefixes)

        candidates: List[Hypothesis] = []
        for row, (score, tokens) in enumerate(live):
            for token_id in range(logp.shape[1]):
                candidates.append((score + float(logp[row, token_id]), tokens + (token_id,)))
        candidates.sort(key=lambda h: (-h[0], h[1]))

        if step == max_len:
            finished.extend(candidates)
            break

        live = []
        for cand in candidates[:beam]:
            if cand[1][-1] == EOS_ID:
                finished.append(cand)
            else:
                live.append(cand)
        if not live:
            break

    tokens = _best(finished, length_penalty) if finished else ()
    return [t for t in tokens if t != EOS_ID]


def greedy_decode(
    params: ParamMap, config: ModelConfig, src_ids: Sequence[int], tgt_tag_id: int, max_len: int = 32
) -> List[int]:
    """Argmax decoding; the lowest id wins exact ties."""
    max_len = min(max_len, config.max_positions - 2)
    src = np.asarray([list(src_ids)], dtype=np.int64)
    memory = encode_source(params, config, src)
    tokens: List[int] = []
    for _ in range(max_len):
        prefix = np.array([[BOS_ID, tgt_tag_id] + tokens], dtype=np.int64)
        logp = next_token_log_probs(params, config, memory, src, prefix)[0]
        token_id = int(np.argmax(logp))
        tokens.append(token_id)
        if token_id == EOS_ID:
            break
    return [t for t in tokens if t != EOS_ID]
