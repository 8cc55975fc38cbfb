"""
Transformer Service — initialization, forward pass and loss.

Forward pass:
  1. Encoder input  [<lang:src>, x..., <eos>]; embeddings scaled by √d plus
     sinusoidal positions.
  2. Each block is a residual sublayer (pre-norm by default, post-norm when
     config.pre_norm is False): self-attention, then (decoder only)
     cross-attention, then the relu FFN.
  3. Decoder input  [<bos>, <lang:tgt>, y1..yn]; target
     [<pad>, y1..yn, <eos>] so the forced tag is never scored.
  4. Logits use the shared embedding table (tied) or output.projection.

Dropout is applied to attention probabilities only, and only when a
numpy Generator is passed (training mode).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import ConfigError
from app.models.tensor import Tensor
from app.models.transformer import (
    DECODER,
    EMBEDDING,
    ENCODER,
    OUTPUT_PROJECTION,
    ModelConfig,
    is_bias_like,
    is_gain,
    layer_prefix,
    param_shapes,
)
from app.models.vocab import BOS_ID, EOS_ID, PAD_ID, Vocab
from app.services import ops
from app.services.hash_service import stable_seed
from app.services.tokenizer_service import encode, encode_tokens

logger = logging.getLogger(__name__)

NEG_INF = -1e9

ParamMap = Dict[str, Tensor]


# ------- Initialization -------

def init_tensor(name: str, shape: Tuple[int, ...], config: ModelConfig, seed: int) -> np.ndarray:
    """Initial value of one named tensor; independent of every other tensor."""
    if is_gain(name):
        return np.ones(shape)
    if is_bias_like(name):
        return np.zeros(shape)
    rng = np.random.default_rng(stable_seed(seed, name))
    return rng.normal(0.0, config.model_dim ** -0.5, size=shape)


def init_model(config: ModelConfig, seed: int) -> ParamMap:
    """
    Fresh parameter map. Gaussian std model_dim^-1/2 for projections and
    embeddings, layer-norm gains 1, every bias 0.
    """
    params = {
        name: Tensor(init_tensor(name, shape, config, seed), requires_grad=True)
        for name, shape in param_shapes(config).items()
    }
    logger.debug("Initialized %d tensors (seed=%d)", len(params), seed)
    return params


# ------- Batches -------

@dataclass
class Batch:
    """Padded id matrices for one training or scoring batch."""

    src: np.ndarray      # (B, S)
    tgt_in: np.ndarray   # (B, T)
    tgt_out: np.ndarray  # (B, T)

    @property
    def size(self) -> int:
        return int(self.src.shape[0])

    @property
    def target_tokens(self) -> int:
        return int((self.tgt_out != PAD_ID).sum())


def build_example(
    vocab: Vocab, src_lang: str, tgt_lang: str, src_text: str, tgt_text: str
) -> Tuple[List[int], List[int], List[int]]:
    """(encoder ids, decoder input ids, decoder target ids) for one pair."""
    src = encode(vocab, src_lang, src_text)
    body = encode_tokens(vocab, tgt_text)
    tag = vocab.tag_id(tgt_lang)
    tgt_in = [BOS_ID, tag] + body
    tgt_out = [PAD_ID] + body + [EOS_ID]
    return src, tgt_in, tgt_out


def _pad(rows: Sequence[Sequence[int]]) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def collate(examples: Sequence[Tuple[List[int], List[int], List[int]]]) -> Batch:
    return Batch(
        src=_pad([e[0] for e in examples]),
        tgt_in=_pad([e[1] for e in examples]),
        tgt_out=_pad([e[2] for e in examples]),
    )


# ------- Building blocks -------

def positional_encoding(length: int, dim: int) -> np.ndarray:
    positions = np.arange(length)[:, None]
    div_term = np.exp(np.arange(0, dim, 2) * -np.log(10000.0) / dim)
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(positions * div_term)
    pe[:, 1::2] = np.cos(positions * div_term)[:, : dim // 2]
    return pe


def causal_mask(length: int) -> np.ndarray:
    """(1, 1, T, T) additive mask hiding later positions."""
    upper = np.triu(np.ones((length, length)), k=1)
    return (upper * NEG_INF)[None, None]


def key_pad_mask(ids: np.ndarray) -> np.ndarray:
    """(B, 1, 1, S) additive mask hiding padded keys."""
    return ((ids == PAD_ID).astype(np.float64) * NEG_INF)[:, None, None, :]


def _embed(params: ParamMap, config: ModelConfig, ids: np.ndarray) -> Tensor:
    length = ids.shape[1]
    if length > config.max_positions:
        raise ConfigError(f"sequence length {length} exceeds max_positions {config.max_positions}")
    x = ops.embedding_lookup(params[EMBEDDING], ids)
    x = ops.scale(x, float(np.sqrt(config.model_dim)))
    return ops.add_constant(x, positional_encoding(length, config.model_dim)[None])


def _split_heads(x: Tensor, config: ModelConfig) -> Tensor:
    b, t, _ = x.shape
    x = ops.reshape(x, (b, t, config.heads, config.head_dim))
    return ops.transpose(x, (0, 2, 1, 3))


def attention(
    params: ParamMap,
    prefix: str,
    config: ModelConfig,
    query: Tensor,
    memory: Tensor,
    mask: np.ndarray,
    rng: Optional[np.random.Generator],
) -> Tensor:
    """Multi-head scaled dot-product attention without projection biases."""
    b, tq, d = query.shape
    q = _split_heads(ops.linear(query, params[prefix + "wq"]), config)
    k = _split_heads(ops.linear(memory, params[prefix + "wk"]), config)
    v = _split_heads(ops.linear(memory, params[prefix + "wv"]), config)
    scores = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2)))
    scores = ops.scale(scores, 1.0 / np.sqrt(config.head_dim))
    scores = ops.add_constant(scores, mask)
    probs = ops.dropout(ops.softmax(scores, axis=-1), config.attention_dropout, rng)
    ctx = ops.transpose(ops.matmul(probs, v), (0, 2, 1, 3))
    return ops.linear(ops.reshape(ctx, (b, tq, d)), params[prefix + "wo"])


def feed_forward(params: ParamMap, prefix: str, x: Tensor) -> Tensor:
    hidden = ops.relu(ops.linear(x, params[prefix + "w1"], params[prefix + "b1"]))
    return ops.linear(hidden, params[prefix + "w2"], params[prefix + "b2"])


def _norm(params: ParamMap, prefix: str, x: Tensor, config: ModelConfig) -> Tensor:
    return ops.layer_norm(x, params[prefix + "gain"], params[prefix + "bias"], config.layer_norm_eps)


def _sublayer(params, config, x, norm_prefix, fn) -> Tensor:
    if config.pre_norm:
        return ops.add(x, fn(_norm(params, norm_prefix, x, config)))
    return _norm(params, norm_prefix, ops.add(x, fn(x)), config)


# ------- Encoder / decoder -------

def encode_source(
    params: ParamMap, config: ModelConfig, src: np.ndarray, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Encoder states (B, S, d)."""
    mask = key_pad_mask(src)
    x = _embed(params, config, src)
    for i in range(config.enc_layers):
        p = layer_prefix(ENCODER, i)
        x = _sublayer(params, config, x, p + "ln_attn.",
                      lambda h: attention(params, p + "self_attn.", config, h, h, mask, rng))
        x = _sublayer(params, config, x, p + "ln_ffn.",
                      lambda h: feed_forward(params, p + "ffn.", h))
    return _norm(params, "encoder.final_ln.", x, config)


def decode_states(
    params: ParamMap,
    config: ModelConfig,
    memory: Tensor,
    src: np.ndarray,
    tgt_in: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Decoder states (B, T, d) for teacher-forced inputs."""
    self_mask = causal_mask(tgt_in.shape[1])
    cross_mask = key_pad_mask(src)
    x = _embed(params, config, tgt_in)
    for i in range(config.dec_layers):
        p = layer_prefix(DECODER, i)
        x = _sublayer(params, config, x, p + "ln_self.",
                      lambda h: attention(params, p + "self_attn.", config, h, h, self_mask, rng))
        x = _sublayer(params, config, x, p + "ln_cross.",
                      lambda h: attention(params, p + "cross_attn.", config, h, memory, cross_mask, rng))
        x = _sublayer(params, config, x, p + "ln_ffn.",
                      lambda h: feed_forward(params, p + "ffn.", h))
    return _norm(params, "decoder.final_ln.", x, config)


def output_logits(params: ParamMap, config: ModelConfig, states: Tensor) -> Tensor:
    table = params[EMBEDDING] if config.tie_embeddings else params[OUTPUT_PROJECTION]
    return ops.linear(states, table)


def logits(
    params: ParamMap, config: ModelConfig, batch: Batch, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Teacher-forced logits (B, T, V)."""
    memory = encode_source(params, config, batch.src, rng)
    states = decode_states(params, config, memory, batch.src, batch.tgt_in, rng)
    return output_logits(params, config, states)


def forward_loss(
    params: ParamMap,
    config: ModelConfig,
    batch: Batch,
    rng: Optional[np.random.Generator] = None,
    reduction: str = "mean",
) -> Tuple[Tensor, int]:
    """
    Label-smoothed loss over non-pad targets and the scored token count.
    Pass an rng for training-mode dropout; omit it for evaluation.
    """
    out = logits(params, config, batch, rng)
    b, t, v = out.shape
    flat = ops.reshape(out, (b * t, v))
    loss = ops.label_smoothed_nll(
        flat, batch.tgt_out.reshape(-1), config.label_smoothing_epsilon, PAD_ID, reduction
    )
    return loss, batch.target_tokens


def target_log_probs(params: ParamMap, config: ModelConfig, batch: Batch) -> Tensor:
    """Un-smoothed log p(target) per position (B, T); pad positions are present but meaningless."""
    out = logits(params, config, batch)
    logp = ops.log_softmax(out, axis=-1)
    return ops.gather_last(logp, batch.tgt_out)


def next_token_log_probs(
    params: ParamMap, config: ModelConfig, memory: Tensor, src: np.ndarray, prefixes: np.ndarray
) -> np.ndarray:
    """Log-probabilities (B, V) of the token after each equal-length prefix."""
    states = decode_states(params, config, memory, src, prefixes)
    last = ops.slice_axis(states, 1, prefixes.shape[1] - 1, prefixes.shape[1])
    logp = ops.log_softmax(output_logits(params, config, last), axis=-1)
    return logp.data[:, 0, :]
